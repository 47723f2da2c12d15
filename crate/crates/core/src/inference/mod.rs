//! Honest subgroup inference.
//!
//! Subjects are split three ways. The tree is grown on the build part and
//! chosen on the validation part; leaf effects and their bootstrap intervals
//! come only from the estimation part, which never touches the structure.

mod bootstrap;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{effect_on, EstimationError};
use crate::panel_data::{split_indices, DataError, PanelDataset};
use crate::tree::{
    build_initial_tree, prune_sequence, select_final_tree, Tree, TreeConfig, TreeDocument,
    TreeError, CHI2_1_95,
};

pub use bootstrap::{bootstrap_ci, percentile_interval, BootstrapDraws, Interval, LeafInterval};
pub use report::{LeafEstimate, SubgroupReport, PART_NAMES};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(String),
    #[error("terminal node {0} has no estimable subjects in the estimation part")]
    EmptyTerminalNode(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Everything needed to reproduce one discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdldConfig {
    pub tree: TreeConfig,
    /// Shares of subjects for (build, validation, estimation).
    pub fractions: [f64; 3],
    /// Complexity penalty per internal node used for final-tree selection.
    pub lambda: f64,
    /// Bootstrap resamples per leaf; 0 skips the intervals.
    pub bootstrap_samples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for SdldConfig {
    fn default() -> Self {
        SdldConfig {
            tree: TreeConfig::default(),
            fractions: [0.48, 0.12, 0.40],
            lambda: CHI2_1_95,
            bootstrap_samples: 1000,
            level: 0.95,
            seed: 1,
        }
    }
}

impl SdldConfig {
    pub fn check(&self) -> Result<(), InferenceError> {
        self.tree.check()?;
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| f.is_nan() || *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(InferenceError::InvalidConfig(format!(
                "fractions {:?} must be positive and sum to 1",
                self.fractions
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(InferenceError::InvalidConfig(format!(
                "lambda {} must be nonnegative",
                self.lambda
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "level {} outside (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Discovers subgroups on the discovery parts and estimates their effects
/// on the held-out estimation part.
pub fn run_sdld(d: &PanelDataset, config: &SdldConfig) -> Result<SubgroupReport, InferenceError> {
    config.check()?;
    let parts = split_indices(d.len(), &config.fractions, config.seed)?;
    let [build, validate, estimate] = parts.each_ref().map(|idx| d.subset(idx));
    if estimate.is_empty() {
        return Err(InferenceError::InvalidConfig(
            "estimation part is empty".into(),
        ));
    }

    let initial = build_initial_tree(&build, &config.tree)?;
    let sequence = prune_sequence(&initial);
    let selection = select_final_tree(&sequence, &validate, config.lambda, &config.tree)?;
    let tree = selection.tree;

    let leaves = honest_estimates(&estimate, &tree, &config.tree)?;
    let draws = if config.bootstrap_samples > 0 {
        Some(bootstrap_ci(
            &estimate,
            &tree,
            config.bootstrap_samples,
            config.level,
            config.seed,
            &config.tree,
        )?)
    } else {
        None
    };
    let leaves = match &draws {
        Some(b) => leaves
            .into_iter()
            .zip(&b.leaves)
            .map(|(mut leaf, iv)| {
                leaf.interval = iv.interval;
                leaf.effective_b = iv.effective_b;
                leaf
            })
            .collect(),
        None => leaves,
    };
    Ok(SubgroupReport {
        config: config.clone(),
        part_sizes: parts.each_ref().map(Vec::len),
        selected_index: selection.index,
        tree: TreeDocument::from_tree(&tree),
        leaves,
        draws,
        partition: parts,
    })
}

/// Effects of every terminal node of `tree`, estimated on `d` alone.
/// Leaves that cannot be estimated carry an error message instead.
pub fn honest_estimates(
    d: &PanelDataset,
    tree: &Tree,
    config: &TreeConfig,
) -> Result<Vec<LeafEstimate>, InferenceError> {
    let (treated, control) = config.regimes(d.horizon())?;
    let n_total = d.len() as f64;
    let leaves = tree
        .terminal_nodes()
        .into_iter()
        .map(|id| {
            let subgroup = tree.node(id).subgroup.clone();
            let members = subgroup.members(d);
            let (effect, error) = if members.is_empty() {
                (
                    None,
                    Some(InferenceError::EmptyTerminalNode(id).to_string()),
                )
            } else {
                match effect_on(d, &members, &treated, &control, &config.estimator) {
                    Ok(e) => (Some(e.effect), None),
                    Err(e) => (
                        None,
                        Some(format!("{}: {e}", InferenceError::EmptyTerminalNode(id))),
                    ),
                }
            };
            LeafEstimate {
                node: id,
                subgroup: subgroup.describe(tree.baseline_names()),
                conditions: subgroup,
                n: members.len(),
                share: members.len() as f64 / n_total,
                effect,
                interval: None,
                effective_b: 0,
                error,
            }
        })
        .collect();
    Ok(leaves)
}

#[cfg(test)]
mod tests;
