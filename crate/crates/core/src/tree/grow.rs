use super::{splitting_statistic, Node, Split, Tree, TreeConfig, TreeError};
use crate::estimators::{effect_on, effect_on_warm, fit_propensity_on, NuisanceModels};
use crate::panel_data::{Condition, PanelDataset, Relation, Subgroup, TreatmentRegime};
use crate::parallel::par_map;

/// Cutpoints for one covariate: for each interior quantile level
/// `i / (n_cutpoints + 1)`, the midpoint between the order statistic at that
/// level and the next larger distinct value. Sorted and deduplicated.
pub(crate) fn quantile_cutpoints(values: &mut [f64], n_cutpoints: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut cuts = Vec::with_capacity(n_cutpoints);
    if n < 2 {
        return cuts;
    }
    for i in 1..=n_cutpoints {
        let pos = (i * n).div_ceil(n_cutpoints + 1).clamp(1, n - 1);
        let lower = values[pos - 1];
        let next = values.partition_point(|v| *v <= lower);
        if next < n {
            cuts.push(0.5 * (lower + values[next]));
        }
    }
    cuts.dedup();
    cuts
}

struct FollowerFlags {
    treated: Vec<bool>,
    control: Vec<bool>,
}

fn follower_flags(
    d: &PanelDataset,
    members: &[usize],
    regimes: &(TreatmentRegime, TreatmentRegime),
) -> FollowerFlags {
    let k = d.horizon();
    let flag = |r: &TreatmentRegime| -> Vec<bool> {
        members
            .iter()
            .map(|&i| {
                let s = &d.subjects[i];
                s.follows(r, k) && s.outcome.is_some()
            })
            .collect()
    };
    FollowerFlags {
        treated: flag(&regimes.0),
        control: flag(&regimes.1),
    }
}

/// Permissible `(covariate, cutpoint)` pairs for a node with the given
/// members: both children keep `min_node_size` subjects and at least
/// `min_regime_followers` uncensored followers of each contrasted regime.
pub fn enumerate_candidate_splits(
    d: &PanelDataset,
    members: &[usize],
    config: &TreeConfig,
) -> Result<Vec<(usize, f64)>, TreeError> {
    let regimes = config.regimes(d.horizon())?;
    let mut out = Vec::new();
    if members.len() < 2 * config.min_node_size {
        return Ok(out);
    }
    let flags = follower_flags(d, members, &regimes);
    let total_t = flags.treated.iter().filter(|f| **f).count();
    let total_c = flags.control.iter().filter(|f| **f).count();
    for j in 0..d.schema.n_baseline() {
        let mut values: Vec<f64> = members.iter().map(|&i| d.subjects[i].baseline[j]).collect();
        for c in quantile_cutpoints(&mut values, config.n_cutpoints) {
            let (mut n_left, mut t_left, mut c_left) = (0, 0, 0);
            for (p, &i) in members.iter().enumerate() {
                if d.subjects[i].baseline[j] < c {
                    n_left += 1;
                    t_left += flags.treated[p] as usize;
                    c_left += flags.control[p] as usize;
                }
            }
            let n_right = members.len() - n_left;
            let ok = n_left >= config.min_node_size
                && n_right >= config.min_node_size
                && t_left.min(c_left) >= config.min_regime_followers
                && (total_t - t_left).min(total_c - c_left) >= config.min_regime_followers;
            if ok {
                out.push((j, c));
            }
        }
    }
    Ok(out)
}

fn partition(
    d: &PanelDataset,
    members: &[usize],
    covariate: usize,
    cutpoint: f64,
) -> (Vec<usize>, Vec<usize>) {
    members
        .iter()
        .partition(|&&i| d.subjects[i].baseline[covariate] < cutpoint)
}

/// Estimates both child effects of one candidate split and its criterion.
pub fn evaluate_candidate(
    d: &PanelDataset,
    members: &[usize],
    covariate: usize,
    cutpoint: f64,
    config: &TreeConfig,
) -> Result<Split, TreeError> {
    evaluate_warm(d, members, covariate, cutpoint, config, None)
}

fn evaluate_warm(
    d: &PanelDataset,
    members: &[usize],
    covariate: usize,
    cutpoint: f64,
    config: &TreeConfig,
    start: Option<&NuisanceModels>,
) -> Result<Split, TreeError> {
    let (treated, control) = config.regimes(d.horizon())?;
    let (left_m, right_m) = partition(d, members, covariate, cutpoint);
    let left = effect_on_warm(d, &left_m, &treated, &control, &config.estimator, start)?.effect;
    let right = effect_on_warm(d, &right_m, &treated, &control, &config.estimator, start)?.effect;
    let statistic = splitting_statistic(&left, &right)?;
    Ok(Split {
        covariate,
        cutpoint,
        statistic,
        left,
        right,
    })
}

/// The permissible split with the largest criterion. Ties go to the lower
/// covariate index, then the lower cutpoint. Candidates whose estimation
/// fails are skipped.
pub fn best_split(
    d: &PanelDataset,
    members: &[usize],
    config: &TreeConfig,
) -> Result<Option<Split>, TreeError> {
    let mut candidates = enumerate_candidate_splits(d, members, config)?;
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // the node's own fit is a good starting point for every child fit
    let start = if candidates.is_empty() {
        None
    } else {
        fit_propensity_on(d, members, &config.estimator).ok()
    };
    let evaluated = par_map(&candidates, |&(j, c)| {
        evaluate_warm(d, members, j, c, config, start.as_ref()).ok()
    });
    let mut best: Option<Split> = None;
    for s in evaluated.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| s.statistic > b.statistic) {
            best = Some(s);
        }
    }
    Ok(best)
}

/// Grows the initial tree on a build sample. Stops at `max_depth`, when a
/// node has fewer than `2 * min_node_size` subjects, or when no permissible
/// split can be estimated.
pub fn build_initial_tree(d: &PanelDataset, config: &TreeConfig) -> Result<Tree, TreeError> {
    config.check()?;
    let (treated, control) = config.regimes(d.horizon())?;
    let all: Vec<usize> = (0..d.len()).collect();
    let root_effect = effect_on(d, &all, &treated, &control, &config.estimator)
        .map_err(TreeError::RootNotEstimable)?
        .effect;
    let mut nodes = vec![Node {
        id: 0,
        parent: None,
        depth: 0,
        subgroup: Subgroup::root(),
        effect: root_effect,
        n: all.len(),
        split: None,
        children: None,
    }];
    // breadth-first expansion keeps node ids in BFS order
    let mut queue = std::collections::VecDeque::from([(0usize, all)]);
    while let Some((id, members)) = queue.pop_front() {
        if nodes[id].depth >= config.max_depth || members.len() < 2 * config.min_node_size {
            continue;
        }
        let Some(split) = best_split(d, &members, config)? else {
            continue;
        };
        let (left_m, right_m) = partition(d, &members, split.covariate, split.cutpoint);
        let parent = &nodes[id];
        let cond = |relation| Condition {
            covariate: split.covariate,
            relation,
            cutpoint: split.cutpoint,
        };
        let left = Node {
            id: nodes.len(),
            parent: Some(id),
            depth: parent.depth + 1,
            subgroup: parent.subgroup.with(cond(Relation::Less)),
            effect: split.left.clone(),
            n: left_m.len(),
            split: None,
            children: None,
        };
        let right = Node {
            id: nodes.len() + 1,
            subgroup: parent.subgroup.with(cond(Relation::GreaterEq)),
            effect: split.right.clone(),
            n: right_m.len(),
            ..left.clone()
        };
        let (l, r) = (left.id, right.id);
        nodes.push(left);
        nodes.push(right);
        nodes[id].children = Some((l, r));
        nodes[id].split = Some(split);
        queue.push_back((l, left_m));
        queue.push_back((r, right_m));
    }
    Ok(Tree::from_nodes(nodes, d.schema.baseline.clone()))
}
