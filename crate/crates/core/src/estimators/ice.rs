//! Iterated conditional expectation: g-computation and longitudinal TMLE.
//!
//! For `k = K+1, ..., 1` the regression `Q_k` of the current target on
//! `(history through L_{k-1}, A_{k-1})` is fitted among subjects still
//! observed at `k`, then evaluated with every treatment set to the regime
//! for subjects observed at `k-1`. Those predictions are the next target.
//! TMLE adds a weighted intercept-only fluctuation after each regression.

use super::design::{fill_features, NuisanceFit};
use super::propensity::NuisanceModels;
use super::{EstimateWithIC, EstimationError, EstimatorConfig, Fluctuation, ModelForm};
use crate::glm::{expit, fit_glm_with, logit, DesignMatrix, Family, GlmFit, GlmOptions};
use crate::panel_data::{PanelDataset, TreatmentRegime};

/// Scaled initial predictions are kept this far from 0 and 1 before the
/// logit offset is taken.
const SCALED_CLIP: f64 = 1e-6;

struct Scale {
    lo: f64,
    range: f64,
}

impl Scale {
    fn to_unit(&self, v: f64) -> f64 {
        ((v - self.lo) / self.range).clamp(0.0, 1.0)
    }

    fn unscale(&self, u: f64) -> f64 {
        self.lo + self.range * u
    }
}

/// Regression of a constant target: an exact intercept-only fit.
fn constant_fit(value: f64) -> NuisanceFit {
    NuisanceFit {
        form: ModelForm::InterceptOnly,
        glm: GlmFit {
            family: Family::Gaussian,
            coefficients: vec![value],
            converged: true,
            iterations: 0,
            deviance: 0.0,
        },
        cells: Vec::new(),
    }
}

pub(crate) fn run_ice(
    d: &PanelDataset,
    members: &[usize],
    regime: &TreatmentRegime,
    config: &EstimatorConfig,
    models: &NuisanceModels,
    targeted: bool,
) -> Result<EstimateWithIC, EstimationError> {
    let k_max = d.horizon();
    regime.check(k_max)?;
    let n = members.len();
    if n == 0 {
        return Err(EstimationError::EmptySubgroup);
    }
    let weights = models.cumulative_weights(d, members, regime)?;

    let (lo, hi) = members
        .iter()
        .filter_map(|&i| d.subjects[i].outcome)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
    if !lo.is_finite() {
        return Err(EstimationError::EmptyRiskSet(k_max + 1));
    }
    let scale = Scale { lo, range: hi - lo };

    let mut target: Vec<f64> = members
        .iter()
        .map(|&i| d.subjects[i].outcome.unwrap_or(f64::NAN))
        .collect();
    let mut ic = vec![0.0; n];
    let mut epsilons = Vec::with_capacity(k_max + 1);
    let mut max_score: f64 = 0.0;
    let mut outcome_models = Vec::with_capacity(k_max + 1);
    let mut feat = Vec::new();
    let mut scratch = Vec::new();

    for k in (1..=k_max + 1).rev() {
        // fitting set: observed at k
        let fit_pos: Vec<usize> = (0..n)
            .filter(|&p| d.subjects[members[p]].at_risk(k))
            .collect();
        if fit_pos.is_empty() {
            return Err(EstimationError::EmptyRiskSet(k));
        }
        let mut x = Vec::with_capacity(fit_pos.len());
        let mut y = Vec::with_capacity(fit_pos.len());
        for &p in &fit_pos {
            let s = &d.subjects[members[p]];
            fill_features(s, d, k - 1, true, None, &mut feat);
            x.push(feat.clone());
            y.push(target[p]);
        }
        let q_fit = if y.iter().all(|v| *v == y[0]) {
            None
        } else {
            Some(NuisanceFit::fit(
                config.outcome_form,
                Family::Gaussian,
                &x,
                &y,
                None,
            )?)
        };

        let mut q = vec![f64::NAN; n];
        for p in 0..n {
            let s = &d.subjects[members[p]];
            if !s.at_risk(k - 1) {
                continue;
            }
            q[p] = match &q_fit {
                None => y[0],
                Some(f) => {
                    fill_features(s, d, k - 1, true, Some(regime), &mut feat);
                    f.predict(&feat, &mut scratch)?
                }
            };
        }
        outcome_models.push(q_fit.unwrap_or_else(|| constant_fit(y[0])));

        if targeted {
            let followers: Vec<usize> = (0..n).filter(|&p| weights.follower[p][k - 1]).collect();
            if followers.is_empty() {
                return Err(EstimationError::NoFollowers);
            }
            let h: Vec<f64> = followers
                .iter()
                .map(|&p| 1.0 / weights.g[p][k - 1])
                .collect();
            let h_sum: f64 = h.iter().sum();
            let eps = if scale.range == 0.0 {
                0.0
            } else {
                match config.fluctuation {
                    Fluctuation::Logistic => {
                        let offset: Vec<f64> = (0..n)
                            .map(|p| {
                                if q[p].is_nan() {
                                    0.0
                                } else {
                                    logit(scale.to_unit(q[p]).clamp(SCALED_CLIP, 1.0 - SCALED_CLIP))
                                }
                            })
                            .collect();
                        let design = DesignMatrix::from_rows(&vec![vec![1.0]; followers.len()])?;
                        let resp: Vec<f64> = followers
                            .iter()
                            .map(|&p| scale.to_unit(target[p]))
                            .collect();
                        let off: Vec<f64> = followers.iter().map(|&p| offset[p]).collect();
                        let opts = GlmOptions {
                            tolerance: 1e-13,
                            start: Some(vec![0.0]),
                            ..GlmOptions::default()
                        };
                        let fit =
                            fit_glm_with(&design, &resp, &h, Some(&off), Family::Binomial, &opts)?;
                        let eps = fit.coefficients[0];
                        for p in 0..n {
                            if !q[p].is_nan() {
                                q[p] = scale.unscale(expit(offset[p] + eps));
                            }
                        }
                        eps
                    }
                    Fluctuation::Gaussian => {
                        let eps = followers
                            .iter()
                            .zip(&h)
                            .map(|(&p, w)| w * (target[p] - q[p]))
                            .sum::<f64>()
                            / h_sum;
                        for v in q.iter_mut().filter(|v| !v.is_nan()) {
                            *v += eps;
                        }
                        eps
                    }
                }
            };
            epsilons.push(eps);
            let mut score = 0.0;
            for (&p, w) in followers.iter().zip(&h) {
                let r = target[p] - q[p];
                ic[p] += w * r;
                score += w * r;
            }
            if scale.range > 0.0 {
                score /= scale.range;
            }
            max_score = max_score.max((score / h_sum).abs());
        } else {
            // g-computation borrows the same residual terms for its variance
            for p in (0..n).filter(|&p| weights.follower[p][k - 1]) {
                ic[p] += (target[p] - q[p]) / weights.g[p][k - 1];
            }
        }
        target = q;
    }
    outcome_models.reverse();

    let mean = target.iter().sum::<f64>() / n as f64;
    for (v, t) in ic.iter_mut().zip(&target) {
        *v += t - mean;
    }
    if !targeted {
        let c = ic.iter().sum::<f64>() / n as f64;
        ic.iter_mut().for_each(|v| *v -= c);
    }
    let est = EstimateWithIC::from_influence(mean, ic, (lo, hi)).with_diagnostics(
        epsilons,
        max_score,
        outcome_models,
    );
    if targeted {
        super::diagnostics::record_tmle(est.mean, lo, hi);
    }
    Ok(est)
}
