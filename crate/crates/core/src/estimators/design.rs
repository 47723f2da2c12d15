//! Feature construction for the nuisance regressions.
//!
//! The history before treatment at period `k` is
//! `(L0, L_0..L_k time-varying, A_0..A_{k-1})`; models that condition on the
//! current treatment append `A_k`.

use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::glm::{DesignMatrix, Family, GlmFit};
use crate::panel_data::{PanelDataset, SubjectRecord, TreatmentRegime};

/// Functional form used for a nuisance regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    /// Linear and additive main effects of all past covariates and treatments.
    #[default]
    MainEffects,
    InterceptOnly,
    /// One parameter per distinct covariate pattern; only for discrete data.
    Saturated,
}

/// Writes the history through `L_k` into `buf` (cleared first), followed by
/// treatments `A_0..A_{k-1}`, plus `A_k` when `with_current_treatment`.
/// Treatments come from `regime` when given, otherwise from the record.
pub(crate) fn fill_features(
    s: &SubjectRecord,
    d: &PanelDataset,
    k: usize,
    with_current_treatment: bool,
    regime: Option<&TreatmentRegime>,
    buf: &mut Vec<f64>,
) {
    buf.clear();
    buf.extend_from_slice(&s.baseline);
    for j in 0..=k {
        match s.periods.get(j) {
            Some(p) => buf.extend_from_slice(&p.covariates),
            None => buf.extend(std::iter::repeat_n(
                f64::NAN,
                d.schema.time_varying[j].len(),
            )),
        }
    }
    let last = if with_current_treatment { k + 1 } else { k };
    for j in 0..last {
        let a = match regime {
            Some(r) => r.values[j],
            None => s.periods.get(j).is_some_and(|p| p.treatment),
        };
        buf.push(if a { 1.0 } else { 0.0 });
    }
}

/// A fitted nuisance regression together with the feature map it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub form: ModelForm,
    pub glm: GlmFit,
    /// Distinct covariate patterns for saturated fits; the first is the
    /// reference cell absorbed by the intercept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Vec<f64>>,
}

fn pattern_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn design_row(
    form: ModelForm,
    cells: &[Vec<f64>],
    x: &[f64],
    out: &mut Vec<f64>,
) -> Result<(), EstimationError> {
    out.clear();
    out.push(1.0);
    match form {
        ModelForm::MainEffects => out.extend_from_slice(x),
        ModelForm::InterceptOnly => {}
        ModelForm::Saturated => {
            let c = cells
                .binary_search_by(|cell| pattern_cmp(cell, x))
                .map_err(|_| EstimationError::UnseenCell)?;
            out.extend((1..cells.len()).map(|j| if j == c { 1.0 } else { 0.0 }));
        }
    }
    Ok(())
}

impl NuisanceFit {
    /// Fits `response ~ features` with unit weights.
    pub fn fit(
        form: ModelForm,
        family: Family,
        features: &[Vec<f64>],
        response: &[f64],
        start: Option<&NuisanceFit>,
    ) -> Result<Self, EstimationError> {
        let mut cells = Vec::new();
        if form == ModelForm::Saturated {
            cells = features.to_vec();
            cells.sort_by(|a, b| pattern_cmp(a, b));
            cells.dedup_by(|a, b| pattern_cmp(a, b).is_eq());
        }
        let width = match form {
            ModelForm::MainEffects => 1 + features.first().map_or(0, |f| f.len()),
            ModelForm::InterceptOnly => 1,
            ModelForm::Saturated => cells.len(),
        };
        let mut design = DesignMatrix::with_capacity(width, features.len());
        let mut row = Vec::with_capacity(width);
        for x in features {
            design_row(form, &cells, x, &mut row)?;
            design.push_row(&row)?;
        }
        let weights = vec![1.0; features.len()];
        let opts = crate::glm::GlmOptions {
            start: start
                .filter(|s| {
                    s.form == form
                        && s.glm.coefficients.len() == width
                        && form != ModelForm::Saturated
                })
                .map(|s| s.glm.coefficients.clone()),
            ..Default::default()
        };
        let glm = crate::glm::fit_glm_with(&design, response, &weights, None, family, &opts)?;
        Ok(NuisanceFit { form, glm, cells })
    }

    pub fn predict(&self, x: &[f64], scratch: &mut Vec<f64>) -> Result<f64, EstimationError> {
        design_row(self.form, &self.cells, x, scratch)?;
        Ok(self.glm.predict_row(scratch, 0.0))
    }
}
