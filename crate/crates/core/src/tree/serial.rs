//! JSON document form of a tree.

use serde::{Deserialize, Serialize};

use super::{Node, NodeId, Split, Tree, TreeError};
use crate::estimators::SubgroupEffect;
use crate::panel_data::{Condition, Relation, Subgroup, TreatmentRegime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutpoint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    pub effect: f64,
    pub variance: f64,
    pub n: usize,
    pub mean_treated: f64,
    pub mean_control: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub baseline: Vec<String>,
    pub treated: TreatmentRegime,
    pub control: TreatmentRegime,
    pub root: NodeDocument,
}

fn node_doc(tree: &Tree, id: NodeId) -> NodeDocument {
    let node = tree.node(id);
    let split = node.split.as_ref();
    NodeDocument {
        covariate: split.map(|s| s.covariate),
        covariate_name: split.map(|s| tree.baseline_names[s.covariate].clone()),
        cutpoint: split.map(|s| s.cutpoint),
        statistic: split.map(|s| s.statistic),
        effect: node.effect.delta,
        variance: node.effect.variance,
        n: node.n,
        mean_treated: node.effect.mean1,
        mean_control: node.effect.mean0,
        children: node
            .children
            .map(|(l, r)| vec![node_doc(tree, l), node_doc(tree, r)])
            .unwrap_or_default(),
    }
}

impl TreeDocument {
    pub fn from_tree(tree: &Tree) -> Self {
        let (treated, control) = tree.root().effect.regimes.clone();
        TreeDocument {
            baseline: tree.baseline_names.clone(),
            treated,
            control,
            root: node_doc(tree, 0),
        }
    }

    pub fn into_tree(self) -> Result<Tree, TreeError> {
        let effect = |d: &NodeDocument| SubgroupEffect {
            delta: d.effect,
            variance: d.variance,
            n: d.n,
            regimes: (self.treated.clone(), self.control.clone()),
            mean1: d.mean_treated,
            mean0: d.mean_control,
        };
        let mut nodes = vec![Node {
            id: 0,
            parent: None,
            depth: 0,
            subgroup: Subgroup::root(),
            effect: effect(&self.root),
            n: self.root.n,
            split: None,
            children: None,
        }];
        let mut queue = std::collections::VecDeque::from([(0usize, &self.root)]);
        while let Some((id, doc)) = queue.pop_front() {
            match (doc.covariate, doc.cutpoint, doc.statistic, doc.children.as_slice()) {
                (None, None, None, []) => {}
                (Some(j), Some(c), Some(g), [l, r]) => {
                    if j >= self.baseline.len() {
                        return Err(TreeError::Document(format!("covariate index {j} out of range")));
                    }
                    let cond = |relation| Condition {
                        covariate: j,
                        relation,
                        cutpoint: c,
                    };
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    for (child, doc_child, rel) in [(li, l, Relation::Less), (ri, r, Relation::GreaterEq)] {
                        nodes.push(Node {
                            id: child,
                            parent: Some(id),
                            depth: nodes[id].depth + 1,
                            subgroup: nodes[id].subgroup.with(cond(rel)),
                            effect: effect(doc_child),
                            n: doc_child.n,
                            split: None,
                            children: None,
                        });
                        queue.push_back((child, doc_child));
                    }
                    nodes[id].split = Some(Split {
                        covariate: j,
                        cutpoint: c,
                        statistic: g,
                        left: effect(l),
                        right: effect(r),
                    });
                    nodes[id].children = Some((li, ri));
                }
                _ => {
                    return Err(TreeError::Document(
                        "a node needs either no split fields or covariate, cutpoint, statistic and two children"
                            .into(),
                    ))
                }
            }
        }
        Ok(Tree::from_nodes(nodes, self.baseline))
    }
}

impl Tree {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeDocument::from_tree(self))
            .expect("tree document serializes")
    }

    pub fn from_json(text: &str) -> Result<Tree, TreeError> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| TreeError::Document(e.to_string()))?;
        doc.into_tree()
    }
}
