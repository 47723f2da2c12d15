//! Interaction trees for effect heterogeneity.
//!
//! A tree is grown greedily on a build sample by maximizing the squared
//! standardized difference of child effects, then pruned into a nested
//! sequence by weakest-link cutting, and finally one member of that sequence
//! is chosen by its split complexity recomputed on a validation sample.

mod grow;
mod prune;
mod serial;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimationError, EstimatorConfig, SubgroupEffect};
use crate::panel_data::{DataError, Subgroup, TreatmentRegime};

pub use grow::{best_split, build_initial_tree, enumerate_candidate_splits, evaluate_candidate};
pub use prune::{
    prune_sequence, select_final_tree, split_complexity, validation_statistics, PrunedSequence,
    Selection,
};
pub use serial::TreeDocument;

/// 95th percentile of the chi-square distribution with one degree of freedom.
pub const CHI2_1_95: f64 = 3.841459;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("root effect could not be estimated: {0}")]
    RootNotEstimable(#[source] EstimationError),
    #[error("combined variance of the child effects is not positive")]
    ZeroVariance,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed tree document: {0}")]
    Document(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

pub type NodeId = usize;

/// Growth and stopping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Minimum subjects in each child of a split.
    pub min_node_size: usize,
    /// Minimum uncensored followers of each contrasted regime in each child.
    pub min_regime_followers: usize,
    pub max_depth: usize,
    /// Number of interior quantiles tried as cutpoints per covariate.
    pub n_cutpoints: usize,
    /// Contrasted regimes; `None` means always-treated versus never-treated.
    pub treated: Option<TreatmentRegime>,
    pub control: Option<TreatmentRegime>,
    pub estimator: EstimatorConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_node_size: 200,
            min_regime_followers: 25,
            max_depth: 5,
            n_cutpoints: 15,
            treated: None,
            control: None,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl TreeConfig {
    /// The contrasted regimes resolved against a data horizon.
    pub fn regimes(&self, horizon: usize) -> Result<(TreatmentRegime, TreatmentRegime), TreeError> {
        let treated = self
            .treated
            .clone()
            .unwrap_or_else(|| TreatmentRegime::always(horizon));
        let control = self
            .control
            .clone()
            .unwrap_or_else(|| TreatmentRegime::never(horizon));
        treated.check(horizon)?;
        control.check(horizon)?;
        Ok((treated, control))
    }

    pub fn check(&self) -> Result<(), TreeError> {
        if self.min_node_size == 0 {
            return Err(TreeError::InvalidConfig(
                "min_node_size must be positive".into(),
            ));
        }
        if self.n_cutpoints == 0 {
            return Err(TreeError::InvalidConfig(
                "n_cutpoints must be positive".into(),
            ));
        }
        self.estimator.check()?;
        Ok(())
    }
}

/// Split `{x_j < c}` / `{x_j >= c}` with its criterion value and child effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub covariate: usize,
    pub cutpoint: f64,
    pub statistic: f64,
    pub left: SubgroupEffect,
    pub right: SubgroupEffect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub subgroup: Subgroup,
    pub effect: SubgroupEffect,
    pub n: usize,
    pub split: Option<Split>,
    /// `(left, right)`; present exactly when `split` is.
    pub children: Option<(NodeId, NodeId)>,
}

impl Node {
    pub fn is_internal(&self) -> bool {
        self.children.is_some()
    }
}

/// Binary tree stored as an arena. Node ids are stable across pruning:
/// pruned descendants stay in the arena but become unreachable from the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    baseline_names: Vec<String>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>, baseline_names: Vec<String>) -> Self {
        Tree {
            nodes,
            baseline_names,
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn baseline_names(&self) -> &[String] {
        &self.baseline_names
    }

    pub fn n_baseline(&self) -> usize {
        self.baseline_names.len()
    }

    /// Reachable nodes in breadth-first order (left before right).
    pub fn bfs(&self) -> Vec<NodeId> {
        let mut out = vec![0];
        let mut head = 0;
        while head < out.len() {
            if let Some((l, r)) = self.nodes[out[head]].children {
                out.push(l);
                out.push(r);
            }
            head += 1;
        }
        out
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.bfs()
            .into_iter()
            .filter(|&i| self.nodes[i].is_internal())
            .collect()
    }

    pub fn terminal_nodes(&self) -> Vec<NodeId> {
        self.bfs()
            .into_iter()
            .filter(|&i| !self.nodes[i].is_internal())
            .collect()
    }

    pub fn n_internal(&self) -> usize {
        self.internal_nodes().len()
    }

    pub fn n_terminal(&self) -> usize {
        self.n_internal() + 1
    }

    pub fn is_root_only(&self) -> bool {
        !self.root().is_internal()
    }

    /// Reachable splits in breadth-first order.
    pub fn splits(&self) -> Vec<&Split> {
        self.internal_nodes()
            .into_iter()
            .filter_map(|i| self.nodes[i].split.as_ref())
            .collect()
    }

    /// Terminal node containing the baseline vector `l0`.
    pub fn assign_subgroup(&self, l0: &[f64]) -> Result<NodeId, TreeError> {
        if l0.len() != self.n_baseline() {
            return Err(DataError::SchemaMismatch(format!(
                "baseline vector of width {} for a tree over {} covariates",
                l0.len(),
                self.n_baseline()
            ))
            .into());
        }
        let mut id = 0;
        while let (Some(split), Some((l, r))) = (&self.nodes[id].split, self.nodes[id].children) {
            id = if l0[split.covariate] < split.cutpoint {
                l
            } else {
                r
            };
        }
        Ok(id)
    }

    /// Copy with the branch below `id` removed, making `id` a leaf.
    pub fn pruned_at(&self, id: NodeId) -> Tree {
        let mut t = self.clone();
        t.nodes[id].split = None;
        t.nodes[id].children = None;
        t
    }

    /// Reachable internal nodes in the branch rooted at `id`.
    pub fn branch_internal(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            if let Some((l, r)) = self.nodes[i].children {
                out.push(i);
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Human-readable subgroup path of a node.
    pub fn describe(&self, id: NodeId) -> String {
        self.nodes[id].subgroup.describe(&self.baseline_names)
    }
}

/// Split criterion `(d_l - d_r)^2 / (v_l + v_r)`.
pub fn splitting_statistic(
    left: &SubgroupEffect,
    right: &SubgroupEffect,
) -> Result<f64, TreeError> {
    let var = left.variance + right.variance;
    if !(var > 0.0 && var.is_finite()) {
        return Err(TreeError::ZeroVariance);
    }
    let diff = left.delta - right.delta;
    let g = diff * diff / var;
    if !g.is_finite() {
        return Err(TreeError::ZeroVariance);
    }
    Ok(g)
}

#[cfg(test)]
pub(crate) mod test_support;

#[cfg(test)]
mod tests;
