use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dgp::{MODIFIER, MODIFIER_CUTPOINT};
use crate::tree::Tree;

/// Structure metrics of one fitted tree against the correct single split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEvaluation {
    /// Exactly one split, on the modifier, at any cutpoint.
    pub correct: bool,
    pub terminal_nodes: usize,
    /// Split events on covariates other than the modifier.
    pub noise_splits: usize,
    pub similarity: f64,
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// `1 - (pairs grouped differently by the two labelings) / C(m, 2)`,
/// computed from the contingency table in linear time.
pub fn pairwise_similarity(truth: &[usize], fitted: &[usize]) -> f64 {
    assert_eq!(truth.len(), fitted.len());
    let m = truth.len() as u64;
    assert!(m >= 2, "similarity needs at least two points");
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut by_truth: HashMap<usize, u64> = HashMap::new();
    let mut by_fitted: HashMap<usize, u64> = HashMap::new();
    for (&t, &f) in truth.iter().zip(fitted) {
        *joint.entry((t, f)).or_default() += 1;
        *by_truth.entry(t).or_default() += 1;
        *by_fitted.entry(f).or_default() += 1;
    }
    let both: u64 = joint.values().map(|&c| choose2(c)).sum();
    let same_truth: u64 = by_truth.values().map(|&c| choose2(c)).sum();
    let same_fitted: u64 = by_fitted.values().map(|&c| choose2(c)).sum();
    let disagree = same_truth + same_fitted - 2 * both;
    1.0 - disagree as f64 / choose2(m) as f64
}

/// Label of the correct stump: 0 below the cutpoint, 1 at or above it.
pub fn correct_partition(l0: &[f64]) -> usize {
    usize::from(l0[MODIFIER] >= MODIFIER_CUTPOINT)
}

pub fn evaluate_tree(tree: &Tree, eval_sample: &[Vec<f64>]) -> TreeEvaluation {
    let splits = tree.splits();
    let on_modifier = splits.iter().filter(|s| s.covariate == MODIFIER).count();
    let truth: Vec<usize> = eval_sample.iter().map(|x| correct_partition(x)).collect();
    let fitted: Vec<usize> = eval_sample
        .iter()
        .map(|x| {
            tree.assign_subgroup(x)
                .expect("evaluation sample matches the tree width")
        })
        .collect();
    TreeEvaluation {
        correct: splits.len() == 1 && on_modifier == 1,
        terminal_nodes: tree.n_terminal(),
        noise_splits: splits.len() - on_modifier,
        similarity: pairwise_similarity(&truth, &fitted),
    }
}

/// Averages over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub correct_tree_proportion: f64,
    pub mean_terminal_nodes: f64,
    pub mean_noise_splits: f64,
    pub first_split_correct_proportion: f64,
    pub pairwise_prediction_similarity: f64,
    pub replicates: usize,
    pub failed: usize,
}
