//! Hand-built trees for unit tests.

use super::{Node, Split, Tree};
use crate::estimators::SubgroupEffect;
use crate::panel_data::{Condition, Relation, Subgroup, TreatmentRegime};

pub(crate) fn effect(delta: f64, variance: f64, n: usize) -> SubgroupEffect {
    SubgroupEffect {
        delta,
        variance,
        n,
        regimes: (TreatmentRegime::always(1), TreatmentRegime::never(1)),
        mean1: delta,
        mean0: 0.0,
    }
}

/// Nested description: `Leaf` or `Split(covariate, cutpoint, statistic, left, right)`.
pub(crate) enum Shape {
    Leaf,
    Split(usize, f64, f64, Box<Shape>, Box<Shape>),
}

pub(crate) fn leaf() -> Box<Shape> {
    Box::new(Shape::Leaf)
}

pub(crate) fn split(j: usize, c: f64, g: f64, l: Box<Shape>, r: Box<Shape>) -> Box<Shape> {
    Box::new(Shape::Split(j, c, g, l, r))
}

/// Builds a tree over `n_baseline` covariates with ids in BFS order.
pub(crate) fn build(shape: Box<Shape>, n_baseline: usize) -> Tree {
    let mut nodes = vec![Node {
        id: 0,
        parent: None,
        depth: 0,
        subgroup: Subgroup::root(),
        effect: effect(0.0, 1.0, 100),
        n: 100,
        split: None,
        children: None,
    }];
    let mut queue = std::collections::VecDeque::from([(0usize, shape)]);
    while let Some((id, s)) = queue.pop_front() {
        if let Shape::Split(j, c, g, l, r) = *s {
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            for (child, rel) in [(li, Relation::Less), (ri, Relation::GreaterEq)] {
                nodes.push(Node {
                    id: child,
                    parent: Some(id),
                    depth: nodes[id].depth + 1,
                    subgroup: nodes[id].subgroup.with(Condition {
                        covariate: j,
                        relation: rel,
                        cutpoint: c,
                    }),
                    effect: effect(child as f64, 1.0, 50),
                    n: 50,
                    split: None,
                    children: None,
                });
            }
            nodes[id].split = Some(Split {
                covariate: j,
                cutpoint: c,
                statistic: g,
                left: nodes[li].effect.clone(),
                right: nodes[ri].effect.clone(),
            });
            nodes[id].children = Some((li, ri));
            queue.push_back((li, l));
            queue.push_back((ri, r));
        }
    }
    let names = (0..n_baseline).map(|j| format!("x{}", j + 1)).collect();
    Tree::from_nodes(nodes, names)
}
