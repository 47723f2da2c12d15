//! Subgroup-specific potential-outcome means and treatment effects under a
//! static regime with censoring abolished.
//!
//! Three estimators share one set of nuisance fits:
//!
//! * IPW in Hajek (ratio) form,
//! * g-computation by iterated conditional expectations,
//! * longitudinal TMLE, which adds a targeting step to every iterated
//!   regression and is doubly robust.
//!
//! All nuisance models are refitted on the subgroup's own subjects. The
//! usual identification conditions (consistency, sequential exchangeability,
//! positivity) are assumed; positivity is enforced in practice by flooring
//! every per-period probability at [`EstimatorConfig::truncation_bound`].
//!
//! Variances come from the efficient influence curve with clever covariate
//! `H_k = I(A_0..A_{k-1} follow the regime, uncensored) / g_{0:k-1}`.

mod design;
mod ice;
mod ipw;
mod propensity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::GlmError;
use crate::panel_data::{DataError, PanelDataset, Subgroup, TreatmentRegime};

pub use design::{ModelForm, NuisanceFit};
pub use propensity::{fit_propensity_models, CumulativeWeights, NuisanceModels};

pub(crate) use propensity::{fit_propensity_on, fit_propensity_warm};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("no subjects at risk at period {0}")]
    EmptyRiskSet(usize),
    #[error("no subject followed the regime while uncensored")]
    NoFollowers,
    #[error("subgroup has no subjects")]
    EmptySubgroup,
    #[error("covariate pattern not seen when fitting a saturated model")]
    UnseenCell,
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ipw,
    Gcomp,
    #[default]
    Tmle,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" => Ok(Method::Ipw),
            "gcomp" | "g-comp" | "gcomputation" => Ok(Method::Gcomp),
            "tmle" => Ok(Method::Tmle),
            other => Err(format!(
                "unknown estimator `{other}` (expected tmle, gcomp or ipw)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ipw => "ipw",
            Method::Gcomp => "gcomp",
            Method::Tmle => "tmle",
        })
    }
}

/// Fluctuation submodel for the targeting step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fluctuation {
    /// Logistic fluctuation of the outcome rescaled to `[0, 1]`; keeps the
    /// estimate inside the observed outcome range.
    #[default]
    Logistic,
    /// Linear fluctuation, for diagnostics only.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Floor applied to every per-period treatment and censoring probability.
    pub truncation_bound: f64,
    pub treatment_form: ModelForm,
    pub censoring_form: ModelForm,
    pub outcome_form: ModelForm,
    pub fluctuation: Fluctuation,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Tmle,
            truncation_bound: 0.01,
            treatment_form: ModelForm::MainEffects,
            censoring_form: ModelForm::MainEffects,
            outcome_form: ModelForm::MainEffects,
            fluctuation: Fluctuation::Logistic,
        }
    }
}

impl EstimatorConfig {
    pub fn with_method(method: Method) -> Self {
        EstimatorConfig {
            method,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), EstimationError> {
        if !(self.truncation_bound > 0.0 && self.truncation_bound <= 0.5) {
            return Err(EstimationError::InvalidConfig(format!(
                "truncation_bound {} outside (0, 0.5]",
                self.truncation_bound
            )));
        }
        Ok(())
    }
}

/// A potential-outcome mean with its influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateWithIC {
    pub mean: f64,
    /// `sample variance(influence_values) / n`.
    pub variance: f64,
    pub n: usize,
    pub influence_values: Vec<f64>,
    /// Observed outcome range used for bounding and rescaling.
    pub outcome_range: (f64, f64),
    /// Fluctuation coefficients, from the last regression back to `Q_1`.
    pub epsilons: Vec<f64>,
    /// Largest `|weighted mean residual|` after a fluctuation, on the unit scale.
    pub max_score_residual: f64,
    pub outcome_models: Vec<NuisanceFit>,
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

impl EstimateWithIC {
    pub(crate) fn from_influence(
        mean: f64,
        influence_values: Vec<f64>,
        outcome_range: (f64, f64),
    ) -> Self {
        let n = influence_values.len();
        EstimateWithIC {
            mean,
            variance: sample_variance(&influence_values) / n as f64,
            n,
            influence_values,
            outcome_range,
            epsilons: Vec::new(),
            max_score_residual: 0.0,
            outcome_models: Vec::new(),
        }
    }

    pub(crate) fn with_diagnostics(
        mut self,
        epsilons: Vec<f64>,
        max_score_residual: f64,
        outcome_models: Vec<NuisanceFit>,
    ) -> Self {
        self.epsilons = epsilons;
        self.max_score_residual = max_score_residual;
        self.outcome_models = outcome_models;
        self
    }
}

/// `delta = E[Y^{regime1}] - E[Y^{regime0}]` within a subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEffect {
    pub delta: f64,
    pub variance: f64,
    pub n: usize,
    pub regimes: (TreatmentRegime, TreatmentRegime),
    pub mean1: f64,
    pub mean0: f64,
}

fn members_of(d: &PanelDataset, w: &Subgroup) -> Result<Vec<usize>, EstimationError> {
    w.check(d.schema.n_baseline())?;
    let m = w.members(d);
    if m.is_empty() {
        return Err(EstimationError::EmptySubgroup);
    }
    Ok(m)
}

pub fn estimate_ipw(
    d: &PanelDataset,
    regime: &TreatmentRegime,
    w: &Subgroup,
    models: &NuisanceModels,
) -> Result<EstimateWithIC, EstimationError> {
    ipw::run_ipw(d, &members_of(d, w)?, regime, models)
}

pub fn estimate_gcomp(
    d: &PanelDataset,
    regime: &TreatmentRegime,
    w: &Subgroup,
    models: &NuisanceModels,
    config: &EstimatorConfig,
) -> Result<EstimateWithIC, EstimationError> {
    ice::run_ice(d, &members_of(d, w)?, regime, config, models, false)
}

pub fn estimate_tmle(
    d: &PanelDataset,
    regime: &TreatmentRegime,
    w: &Subgroup,
    models: &NuisanceModels,
    config: &EstimatorConfig,
) -> Result<EstimateWithIC, EstimationError> {
    ice::run_ice(d, &members_of(d, w)?, regime, config, models, true)
}

/// The effect together with both potential-outcome estimates.
#[derive(Debug, Clone)]
pub struct EffectDetail {
    pub effect: SubgroupEffect,
    pub treated: EstimateWithIC,
    pub control: EstimateWithIC,
}

pub(crate) fn mean_on(
    d: &PanelDataset,
    members: &[usize],
    regime: &TreatmentRegime,
    models: &NuisanceModels,
    config: &EstimatorConfig,
) -> Result<EstimateWithIC, EstimationError> {
    match config.method {
        Method::Ipw => ipw::run_ipw(d, members, regime, models),
        Method::Gcomp => ice::run_ice(d, members, regime, config, models, false),
        Method::Tmle => ice::run_ice(d, members, regime, config, models, true),
    }
}

/// Effect estimation on an explicit member list (indices into `d`).
pub fn effect_on(
    d: &PanelDataset,
    members: &[usize],
    regime1: &TreatmentRegime,
    regime0: &TreatmentRegime,
    config: &EstimatorConfig,
) -> Result<EffectDetail, EstimationError> {
    effect_on_warm(d, members, regime1, regime0, config, None)
}

/// As [`effect_on`], with propensity fits started from `start`. The optimum
/// is the same; only the number of IRLS iterations changes.
pub fn effect_on_warm(
    d: &PanelDataset,
    members: &[usize],
    regime1: &TreatmentRegime,
    regime0: &TreatmentRegime,
    config: &EstimatorConfig,
    start: Option<&NuisanceModels>,
) -> Result<EffectDetail, EstimationError> {
    if members.is_empty() {
        return Err(EstimationError::EmptySubgroup);
    }
    let models = fit_propensity_warm(d, members, config, start)?;
    let treated = mean_on(d, members, regime1, &models, config)?;
    let control = mean_on(d, members, regime0, &models, config)?;
    let diff: Vec<f64> = treated
        .influence_values
        .iter()
        .zip(&control.influence_values)
        .map(|(a, b)| a - b)
        .collect();
    let n = members.len();
    let effect = SubgroupEffect {
        delta: treated.mean - control.mean,
        variance: sample_variance(&diff) / n as f64,
        n,
        regimes: (regime1.clone(), regime0.clone()),
        mean1: treated.mean,
        mean0: control.mean,
    };
    Ok(EffectDetail {
        effect,
        treated,
        control,
    })
}

pub fn estimate_effect(
    d: &PanelDataset,
    regime1: &TreatmentRegime,
    regime0: &TreatmentRegime,
    w: &Subgroup,
    config: &EstimatorConfig,
) -> Result<SubgroupEffect, EstimationError> {
    Ok(effect_on(d, &members_of(d, w)?, regime1, regime0, config)?.effect)
}

/// Process-wide tally of TMLE estimates falling outside the observed outcome
/// range. Used by the acceptance suite.
pub mod diagnostics {
    use std::sync::atomic::{AtomicU64, Ordering};

    static ESTIMATES: AtomicU64 = AtomicU64::new(0);
    static OUT_OF_RANGE: AtomicU64 = AtomicU64::new(0);

    pub(crate) fn record_tmle(mean: f64, lo: f64, hi: f64) {
        ESTIMATES.fetch_add(1, Ordering::Relaxed);
        if !(mean >= lo && mean <= hi) {
            OUT_OF_RANGE.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// `(estimates, out_of_range)` since process start.
    pub fn tmle_bound_counts() -> (u64, u64) {
        (
            ESTIMATES.load(Ordering::Relaxed),
            OUT_OF_RANGE.load(Ordering::Relaxed),
        )
    }
}
