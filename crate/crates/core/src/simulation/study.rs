use std::io::Write;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dgp::{draw_baseline, simulate_variant, Variant, MODIFIER};
use super::metrics::{evaluate_tree, SimMetrics, TreeEvaluation};
use crate::panel_data::split_indices;
use crate::parallel::par_map;
use crate::tree::{
    build_initial_tree, prune_sequence, select_final_tree, PrunedSequence, Selection, Tree,
    TreeConfig, TreeError, CHI2_1_95,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_build: usize,
    pub n_validate: usize,
    pub seed: u64,
    pub replicates: usize,
    /// Baseline vectors drawn per replicate for the similarity metric.
    pub eval_size: usize,
    pub variant: Variant,
    pub lambda: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_build: 10_000,
            n_validate: 2_000,
            seed: 1,
            replicates: 100,
            eval_size: 1000,
            variant: Variant::Modified,
            lambda: CHI2_1_95,
        }
    }
}

impl StudyConfig {
    pub fn n(&self) -> usize {
        self.n_build + self.n_validate
    }

    /// Seed of replicate `r`: the first word of the ChaCha stream `r` keyed
    /// by the study seed, so replicates do not depend on scheduling.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64);
        rng.next_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub correct: bool,
    pub size: usize,
    pub noise: usize,
    pub first_split: bool,
    pub similarity: f64,
    pub runtime_ms: Option<u128>,
}

/// Everything produced by one replicate, kept for auditing.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub record: ReplicateRecord,
    pub initial_tree: Tree,
    pub sequence: PrunedSequence,
    pub selection: Selection,
    pub evaluation: TreeEvaluation,
}

pub fn run_replicate(
    cfg: &StudyConfig,
    pipeline: &TreeConfig,
    r: usize,
) -> Result<ReplicateOutcome, TreeError> {
    let start = Instant::now();
    let seed = cfg.replicate_seed(r);
    let data = simulate_variant(cfg.n(), seed, cfg.variant);
    let n = cfg.n() as f64;
    let fractions = [cfg.n_build as f64 / n, cfg.n_validate as f64 / n, 0.0];
    let [build_idx, validate_idx, _] = split_indices(cfg.n(), &fractions, seed ^ 0x5eed_5eed)?;
    let build = data.subset(&build_idx);
    let validate = data.subset(&validate_idx);

    let initial_tree = build_initial_tree(&build, pipeline)?;
    let sequence = prune_sequence(&initial_tree);
    let selection = select_final_tree(&sequence, &validate, cfg.lambda, pipeline)?;

    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);
    eval_rng.set_stream(1);
    let eval_sample: Vec<Vec<f64>> = (0..cfg.eval_size)
        .map(|_| draw_baseline(&mut eval_rng))
        .collect();
    let evaluation = evaluate_tree(&selection.tree, &eval_sample);
    let first_split = initial_tree
        .root()
        .split
        .as_ref()
        .is_some_and(|s| s.covariate == MODIFIER);
    let record = ReplicateRecord {
        replicate: r,
        seed,
        correct: evaluation.correct,
        size: evaluation.terminal_nodes,
        noise: evaluation.noise_splits,
        first_split,
        similarity: evaluation.similarity,
        runtime_ms: Some(start.elapsed().as_millis()),
    };
    Ok(ReplicateOutcome {
        record,
        initial_tree,
        sequence,
        selection,
        evaluation,
    })
}

pub struct StudyResult {
    pub metrics: SimMetrics,
    /// One entry per replicate, in replicate order.
    pub outcomes: Vec<Result<ReplicateOutcome, String>>,
}

pub fn aggregate(records: &[&ReplicateRecord], failed: usize) -> SimMetrics {
    let k = records.len();
    let mean = |f: &dyn Fn(&ReplicateRecord) -> f64| {
        if k == 0 {
            f64::NAN
        } else {
            records.iter().map(|r| f(r)).sum::<f64>() / k as f64
        }
    };
    SimMetrics {
        correct_tree_proportion: mean(&|r| f64::from(u8::from(r.correct))),
        mean_terminal_nodes: mean(&|r| r.size as f64),
        mean_noise_splits: mean(&|r| r.noise as f64),
        first_split_correct_proportion: mean(&|r| f64::from(u8::from(r.first_split))),
        pairwise_prediction_similarity: mean(&|r| r.similarity),
        replicates: k,
        failed,
    }
}

/// Runs `cfg.replicates` independent replicates (in parallel when enabled)
/// and averages the structure metrics over those that succeed.
pub fn run_simulation_study(cfg: &StudyConfig, pipeline: &TreeConfig) -> StudyResult {
    let indices: Vec<usize> = (0..cfg.replicates).collect();
    let outcomes: Vec<Result<ReplicateOutcome, String>> = par_map(&indices, |&r| {
        run_replicate(cfg, pipeline, r).map_err(|e| e.to_string())
    });
    let ok: Vec<&ReplicateRecord> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|o| &o.record)
        .collect();
    let failed = outcomes.len() - ok.len();
    StudyResult {
        metrics: aggregate(&ok, failed),
        outcomes,
    }
}

pub const REPLICATE_LOG_HEADER: [&str; 9] = [
    "replicate",
    "seed",
    "correct",
    "size",
    "noise",
    "first_split",
    "similarity",
    "runtime_ms",
    "error",
];

/// Writes the per-replicate log. Runtimes are written only when
/// `with_timing` is set so that untimed logs are reproducible byte for byte.
pub fn write_replicate_log<W: Write>(
    out: W,
    comments: &[String],
    cfg: &StudyConfig,
    outcomes: &[Result<ReplicateOutcome, String>],
    with_timing: bool,
) -> Result<(), csv::Error> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATE_LOG_HEADER)?;
    for (r, o) in outcomes.iter().enumerate() {
        let row: Vec<String> = match o {
            Ok(o) => {
                let rec = &o.record;
                vec![
                    rec.replicate.to_string(),
                    rec.seed.to_string(),
                    u8::from(rec.correct).to_string(),
                    rec.size.to_string(),
                    rec.noise.to_string(),
                    u8::from(rec.first_split).to_string(),
                    rec.similarity.to_string(),
                    match (with_timing, rec.runtime_ms) {
                        (true, Some(ms)) => ms.to_string(),
                        _ => String::new(),
                    },
                    String::new(),
                ]
            }
            Err(e) => {
                let mut row = vec![r.to_string(), cfg.replicate_seed(r).to_string()];
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.clone());
                row
            }
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
