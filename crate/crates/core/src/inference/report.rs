use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BootstrapDraws, Interval, SdldConfig};
use crate::estimators::SubgroupEffect;
use crate::panel_data::{DataError, PanelDataset, Subgroup};
use crate::tree::{NodeId, TreeDocument};

/// Names of the three subject partitions, in split order.
pub const PART_NAMES: [&str; 3] = ["build", "validate", "estimate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEstimate {
    pub node: NodeId,
    /// Readable conjunction such as `x2 < 0.5`.
    pub subgroup: String,
    pub conditions: Subgroup,
    /// Estimation-part subjects in the leaf.
    pub n: usize,
    /// Fraction of the estimation part falling in the leaf.
    pub share: f64,
    pub effect: Option<SubgroupEffect>,
    pub interval: Option<Interval>,
    pub effective_b: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub config: SdldConfig,
    /// Subjects in (build, validation, estimation).
    pub part_sizes: [usize; 3],
    /// Position of the chosen tree in the pruned sequence.
    pub selected_index: usize,
    pub tree: TreeDocument,
    pub leaves: Vec<LeafEstimate>,
    #[serde(skip)]
    pub draws: Option<BootstrapDraws>,
    /// Subject indices of each part, for auditing.
    #[serde(skip)]
    pub partition: [Vec<usize>; 3],
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SubgroupReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One-line configuration fingerprint used as a CSV comment.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    /// One row per leaf, preceded by `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<(), DataError> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# pipeline: {}", self.fingerprint())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "node",
            "subgroup",
            "n",
            "share",
            "effect",
            "variance",
            "lower",
            "upper",
            "level",
            "effective_b",
            "error",
        ])?;
        for leaf in &self.leaves {
            let effect = leaf.effect.as_ref();
            let iv = leaf.interval.as_ref();
            w.write_record([
                leaf.node.to_string(),
                leaf.subgroup.clone(),
                leaf.n.to_string(),
                leaf.share.to_string(),
                num(effect.map(|e| e.delta)),
                num(effect.map(|e| e.variance)),
                num(iv.map(|i| i.lower)),
                num(iv.map(|i| i.upper)),
                num(iv.map(|i| i.level)),
                leaf.effective_b.to_string(),
                leaf.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Bootstrap draws, one row per resample and one column per leaf node.
    /// Writes only the header comments when no bootstrap was run.
    pub fn write_draws_csv<W: Write>(
        &self,
        mut out: W,
        comments: &[String],
    ) -> Result<(), DataError> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# pipeline: {}", self.fingerprint())?;
        let Some(draws) = &self.draws else {
            return Ok(());
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["resample".to_string()];
        header.extend(draws.leaves.iter().map(|l| format!("node_{}", l.node)));
        w.write_record(&header)?;
        for (b, row) in draws.draws.iter().enumerate() {
            let mut rec = vec![b.to_string()];
            rec.extend(row.iter().map(|x| num(*x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `subject_id,part` for every subject of the dataset the report was built on.
    pub fn write_partition_csv<W: Write>(&self, d: &PanelDataset, out: W) -> Result<(), DataError> {
        let mut part = vec![""; d.len()];
        for (name, idx) in PART_NAMES.iter().zip(&self.partition) {
            for &i in idx {
                part[i] = name;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "part"])?;
        for (s, p) in d.subjects.iter().zip(part) {
            w.write_record([s.subject_id.as_str(), p])?;
        }
        w.flush()?;
        Ok(())
    }
}
