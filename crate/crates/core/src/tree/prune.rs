use super::{splitting_statistic, NodeId, Tree, TreeConfig, TreeError};
use crate::estimators::effect_on;
use crate::panel_data::PanelDataset;
use crate::parallel::par_map;

/// Nested trees from the full tree down to the root, with the critical
/// penalty at which each step happens: `trees[d + 1]` is `trees[d]` with its
/// weakest link cut at `critical_lambdas[d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedSequence {
    pub trees: Vec<Tree>,
    pub critical_lambdas: Vec<f64>,
}

impl Tree {
    /// Build-sample criterion values indexed by node id (0 for leaves).
    pub fn build_statistics(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| n.split.as_ref().map_or(0.0, |s| s.statistic))
            .collect()
    }
}

/// `sum of stats over internal nodes - lambda * (number of internal nodes)`.
/// `stats` is indexed by node id. A root-only tree scores 0 for every
/// `lambda`, including infinity.
pub fn split_complexity(tree: &Tree, lambda: f64, stats: &[f64]) -> f64 {
    let internal = tree.internal_nodes();
    if internal.is_empty() {
        return 0.0;
    }
    internal.iter().map(|&i| stats[i]).sum::<f64>() - lambda * internal.len() as f64
}

/// Weakest-link pruning on the build-sample criterion values.
///
/// At each step every internal node `h` is scored by the mean criterion over
/// the internal nodes of its branch; the lowest-scoring branch (first in
/// breadth-first order on ties) is collapsed, and its score is the critical
/// penalty at which the two trees have equal split complexity.
pub fn prune_sequence(tree: &Tree) -> PrunedSequence {
    let stats = tree.build_statistics();
    let mut trees = vec![tree.clone()];
    let mut critical_lambdas = Vec::new();
    loop {
        let current = trees.last().expect("sequence is never empty");
        let mut weakest: Option<(NodeId, f64)> = None;
        for h in current.internal_nodes() {
            let branch = current.branch_internal(h);
            let g = branch.iter().map(|&i| stats[i]).sum::<f64>() / branch.len() as f64;
            if weakest.is_none_or(|(_, best)| g < best) {
                weakest = Some((h, g));
            }
        }
        let Some((h, g)) = weakest else { break };
        let next = current.pruned_at(h);
        critical_lambdas.push(g);
        trees.push(next);
    }
    PrunedSequence {
        trees,
        critical_lambdas,
    }
}

/// Criterion values recomputed on a validation sample for every internal
/// node of `tree`, indexed by node id. Child effects are re-estimated from
/// scratch on the validation subjects falling in each child; a node whose
/// children cannot be estimated scores 0.
pub fn validation_statistics(
    tree: &Tree,
    d_validate: &PanelDataset,
    config: &TreeConfig,
) -> Result<Vec<f64>, TreeError> {
    if d_validate.is_empty() {
        return Err(TreeError::EmptyValidationSet);
    }
    let (treated, control) = config.regimes(d_validate.horizon())?;
    let internal = tree.internal_nodes();
    let values = par_map(&internal, |&id| {
        let (l, r) = tree.node(id).children.expect("internal node has children");
        let estimate = |child: NodeId| {
            let members = tree.node(child).subgroup.members(d_validate);
            effect_on(d_validate, &members, &treated, &control, &config.estimator).map(|e| e.effect)
        };
        match (estimate(l), estimate(r)) {
            (Ok(left), Ok(right)) => splitting_statistic(&left, &right).unwrap_or(0.0),
            _ => 0.0,
        }
    });
    let mut stats = vec![0.0; tree.nodes.len()];
    for (id, g) in internal.into_iter().zip(values) {
        stats[id] = g;
    }
    Ok(stats)
}

/// Index of the best tree at `lambda` (later, smaller trees win ties) and
/// the score of every tree.
pub(crate) fn choose_by_complexity(
    seq: &PrunedSequence,
    lambda: f64,
    stats: &[f64],
) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = seq
        .trees
        .iter()
        .map(|t| split_complexity(t, lambda, stats))
        .collect();
    let mut index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s >= scores[index] {
            index = i;
        }
    }
    (index, scores)
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub tree: Tree,
    /// Position of the selected tree in the pruned sequence.
    pub index: usize,
    /// Validation split complexity of every tree in the sequence.
    pub scores: Vec<f64>,
    /// Validation criterion values indexed by node id.
    pub validation_statistics: Vec<f64>,
}

/// Picks the tree of the sequence with the largest validation split
/// complexity at `lambda`; ties go to the smaller tree.
pub fn select_final_tree(
    seq: &PrunedSequence,
    d_validate: &PanelDataset,
    lambda: f64,
    config: &TreeConfig,
) -> Result<Selection, TreeError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(TreeError::InvalidConfig(format!(
            "lambda {lambda} must be nonnegative"
        )));
    }
    let full = &seq.trees[0];
    let stats = if full.is_root_only() {
        if d_validate.is_empty() {
            return Err(TreeError::EmptyValidationSet);
        }
        vec![0.0; full.nodes.len()]
    } else {
        validation_statistics(full, d_validate, config)?
    };
    let (index, scores) = choose_by_complexity(seq, lambda, &stats);
    Ok(Selection {
        tree: seq.trees[index].clone(),
        index,
        scores,
        validation_statistics: stats,
    })
}
