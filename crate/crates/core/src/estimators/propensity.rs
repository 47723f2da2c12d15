use serde::{Deserialize, Serialize};

use super::design::{fill_features, NuisanceFit};
use super::{EstimationError, EstimatorConfig};
use crate::glm::Family;
use crate::panel_data::{PanelDataset, Subgroup, TreatmentRegime};

/// Per-period treatment and censoring models fitted within one subgroup.
///
/// `treatment_models[k]` predicts `P(A_k = 1 | history)` and
/// `censoring_models[k]` predicts `P(C_k = 0 | history, A_k)`, both among
/// subjects still under observation at `k`. The models do not depend on the
/// regime, so one fit serves both contrasted regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceModels {
    pub treatment_models: Vec<NuisanceFit>,
    pub censoring_models: Vec<NuisanceFit>,
    /// Iterated outcome regressions `Q_1..Q_{K+1}` from the last ICE run.
    pub outcome_models: Vec<NuisanceFit>,
    pub truncation_bound: f64,
}

/// `g[i][k]` is the cumulative probability of following the regime and
/// staying uncensored through period `k`, defined only where
/// `follower[i][k]` holds (NaN elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeWeights {
    pub g: Vec<Vec<f64>>,
    pub follower: Vec<Vec<bool>>,
}

pub fn fit_propensity_models(
    d: &PanelDataset,
    w: &Subgroup,
    config: &EstimatorConfig,
) -> Result<NuisanceModels, EstimationError> {
    w.check(d.schema.n_baseline())?;
    let members = w.members(d);
    if members.is_empty() {
        return Err(EstimationError::EmptySubgroup);
    }
    fit_propensity_on(d, &members, config)
}

pub(crate) fn fit_propensity_on(
    d: &PanelDataset,
    members: &[usize],
    config: &EstimatorConfig,
) -> Result<NuisanceModels, EstimationError> {
    fit_propensity_warm(d, members, config, None)
}

/// As [`fit_propensity_on`], starting each IRLS run from the matching model
/// of `start` (typically the parent node's fit).
pub(crate) fn fit_propensity_warm(
    d: &PanelDataset,
    members: &[usize],
    config: &EstimatorConfig,
    start: Option<&NuisanceModels>,
) -> Result<NuisanceModels, EstimationError> {
    config.check()?;
    let k_max = d.horizon();
    let mut treatment_models = Vec::with_capacity(k_max + 1);
    let mut censoring_models = Vec::with_capacity(k_max + 1);
    let mut buf = Vec::new();
    for k in 0..=k_max {
        let at_risk: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| d.subjects[i].at_risk(k))
            .collect();
        if at_risk.is_empty() {
            return Err(EstimationError::EmptyRiskSet(k));
        }
        let mut x_a = Vec::with_capacity(at_risk.len());
        let mut x_c = Vec::with_capacity(at_risk.len());
        let mut y_a = Vec::with_capacity(at_risk.len());
        let mut y_c = Vec::with_capacity(at_risk.len());
        for &i in &at_risk {
            let s = &d.subjects[i];
            let p = &s.periods[k];
            fill_features(s, d, k, false, None, &mut buf);
            x_a.push(buf.clone());
            buf.push(if p.treatment { 1.0 } else { 0.0 });
            x_c.push(buf.clone());
            y_a.push(if p.treatment { 1.0 } else { 0.0 });
            y_c.push(if p.censored { 0.0 } else { 1.0 });
        }
        treatment_models.push(NuisanceFit::fit(
            config.treatment_form,
            Family::Binomial,
            &x_a,
            &y_a,
            start.map(|m| &m.treatment_models[k]),
        )?);
        censoring_models.push(NuisanceFit::fit(
            config.censoring_form,
            Family::Binomial,
            &x_c,
            &y_c,
            start.map(|m| &m.censoring_models[k]),
        )?);
    }
    Ok(NuisanceModels {
        treatment_models,
        censoring_models,
        outcome_models: Vec::new(),
        truncation_bound: config.truncation_bound,
    })
}

impl NuisanceModels {
    /// Floors a per-period probability at the truncation bound.
    #[inline]
    pub fn truncate(&self, p: f64) -> f64 {
        p.max(self.truncation_bound).min(1.0)
    }

    pub fn cumulative_weights(
        &self,
        d: &PanelDataset,
        members: &[usize],
        regime: &TreatmentRegime,
    ) -> Result<CumulativeWeights, EstimationError> {
        let k_max = d.horizon();
        let mut g = Vec::with_capacity(members.len());
        let mut follower = Vec::with_capacity(members.len());
        let mut feat = Vec::new();
        let mut scratch = Vec::new();
        for &i in members {
            let s = &d.subjects[i];
            let mut gi = vec![f64::NAN; k_max + 1];
            let mut fi = vec![false; k_max + 1];
            let mut cum = 1.0;
            for k in 0..=k_max {
                let Some(p) = s.periods.get(k) else { break };
                if p.treatment != regime.values[k] {
                    break;
                }
                fill_features(s, d, k, false, None, &mut feat);
                let p1 = self.treatment_models[k].predict(&feat, &mut scratch)?;
                let ga = self.truncate(if regime.values[k] { p1 } else { 1.0 - p1 });
                feat.push(if p.treatment { 1.0 } else { 0.0 });
                let gc = self.truncate(self.censoring_models[k].predict(&feat, &mut scratch)?);
                cum *= ga * gc;
                if p.censored {
                    break;
                }
                gi[k] = cum;
                fi[k] = true;
            }
            g.push(gi);
            follower.push(fi);
        }
        Ok(CumulativeWeights { g, follower })
    }
}
