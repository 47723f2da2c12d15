use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::estimators::effect_on;
use crate::panel_data::PanelDataset;
use crate::parallel::par_map;
use crate::tree::{NodeId, Tree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafInterval {
    pub node: NodeId,
    /// `None` when no resample could estimate this leaf.
    pub interval: Option<Interval>,
    /// Resamples in which the leaf was estimable.
    pub effective_b: usize,
}

/// All bootstrap effect draws, `draws[b][leaf]`, plus the per-leaf intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub leaves: Vec<LeafInterval>,
    pub draws: Vec<Vec<Option<f64>>>,
}

/// Order-statistic percentile interval: the lower end is the
/// `ceil(B * (1 - level) / 2)`-th smallest draw and the upper end the
/// `ceil(B * (1 + level) / 2)`-th. Returns `None` for no draws.
pub fn percentile_interval(draws: &[f64], level: f64) -> Option<Interval> {
    if draws.is_empty() {
        return None;
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = |p: f64| ((p * b as f64 - 1e-9).ceil() as usize).clamp(1, b) - 1;
    Some(Interval {
        lower: sorted[rank((1.0 - level) / 2.0)],
        upper: sorted[rank((1.0 + level) / 2.0)],
        level,
    })
}

fn resample(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 is left to the data split keyed by the same seed
    rng.set_stream(replicate as u64 + 1);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric bootstrap over subjects with the tree structure held fixed.
/// Each resample re-estimates every leaf effect, refitting all nuisance
/// models; a leaf that cannot be estimated in a resample is skipped there.
pub fn bootstrap_ci(
    d_estimate: &PanelDataset,
    tree: &Tree,
    samples: usize,
    level: f64,
    seed: u64,
    config: &TreeConfig,
) -> Result<BootstrapDraws, InferenceError> {
    if samples == 0 {
        return Err(InferenceError::InvalidConfig(
            "bootstrap needs at least one resample".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidConfig(format!(
            "level {level} outside (0, 1)"
        )));
    }
    if d_estimate.is_empty() {
        return Err(InferenceError::InvalidConfig(
            "no subjects to resample".into(),
        ));
    }
    let (treated, control) = config.regimes(d_estimate.horizon())?;
    let leaves = tree.terminal_nodes();
    let replicates: Vec<usize> = (0..samples).collect();
    let draws = par_map(&replicates, |&b| {
        let data = d_estimate.subset(&resample(d_estimate.len(), seed, b));
        leaves
            .iter()
            .map(|&id| {
                let members = tree.node(id).subgroup.members(&data);
                if members.is_empty() {
                    return None;
                }
                effect_on(&data, &members, &treated, &control, &config.estimator)
                    .ok()
                    .map(|e| e.effect.delta)
            })
            .collect::<Vec<_>>()
    });
    let leaves = leaves
        .iter()
        .enumerate()
        .map(|(j, &node)| {
            let column: Vec<f64> = draws.iter().filter_map(|row| row[j]).collect();
            LeafInterval {
                node,
                interval: percentile_interval(&column, level),
                effective_b: column.len(),
            }
        })
        .collect();
    Ok(BootstrapDraws { leaves, draws })
}
