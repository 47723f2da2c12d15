//! Weighted GLM fitting by iteratively reweighted least squares.
//!
//! Two canonical families are supported: Gaussian with identity link and
//! binomial with logit link. Binomial responses may be fractional in
//! `[0, 1]` (quasi-binomial), which the targeting step relies on.
//!
//! Columns other than the intercept are standardized on the fitting rows
//! before solving and the coefficients are mapped back afterwards.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Linear predictors are clamped to this magnitude on the logit scale.
pub const LOGIT_CAP: f64 = 30.0;

const RIDGE_START: f64 = 1e-8;
const RIDGE_MAX: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("binomial response {0} outside [0, 1]")]
    InvalidResponse(f64),
    #[error("weights must be nonnegative, finite and not all zero")]
    InvalidWeights,
    #[error("non-finite value in design, response or offset")]
    NonFinite,
    #[error("normal equations singular even with ridge {0}")]
    SingularDesign(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Gaussian,
    Binomial,
}

/// Dense row-major design matrix. Column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(n_cols: usize) -> Self {
        DesignMatrix {
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(n_cols: usize, rows: usize) -> Self {
        DesignMatrix {
            n_cols,
            data: Vec::with_capacity(n_cols * rows),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GlmError> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut m = DesignMatrix::with_capacity(n_cols, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), GlmError> {
        if row.len() != self.n_cols {
            return Err(GlmError::DimensionMismatch(format!(
                "row of width {} for design of width {}",
                row.len(),
                self.n_cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    /// Intercept first, on the original covariate scale.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
}

#[derive(Debug, Clone)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Convergence when `|dev - dev_old| / (|dev| + 0.1)` drops below this.
    pub tolerance: f64,
    /// Optional starting coefficients (original scale).
    pub start: Option<Vec<f64>>,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 100,
            tolerance: 1e-10,
            start: None,
        }
    }
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn xlogy_ratio(y: f64, mu: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        y * (y / mu).ln()
    }
}

fn unit_deviance(family: Family, y: f64, mu: f64) -> f64 {
    match family {
        Family::Gaussian => (y - mu) * (y - mu),
        Family::Binomial => 2.0 * (xlogy_ratio(y, mu) + xlogy_ratio(1.0 - y, 1.0 - mu)),
    }
}

#[inline]
fn mean_fn(family: Family, eta: f64) -> f64 {
    match family {
        Family::Gaussian => eta,
        Family::Binomial => expit(eta.clamp(-LOGIT_CAP, LOGIT_CAP)),
    }
}

/// Fitting-row view with non-intercept columns standardized.
struct Standardized {
    /// (row index into the original design, weight)
    rows: Vec<(usize, f64)>,
    /// active original columns (excluding intercept) and their center/scale
    cols: Vec<(usize, f64, f64)>,
    /// column-major standardized design over `rows`; column 0 is the intercept
    z: Vec<f64>,
    p: usize,
}

impl Standardized {
    fn new(design: &DesignMatrix, weights: &[f64]) -> Self {
        let rows: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        let total: f64 = rows.iter().map(|r| r.1).sum();
        let mut cols = Vec::new();
        for j in 1..design.n_cols() {
            let mean = rows.iter().map(|&(i, w)| w * design.row(i)[j]).sum::<f64>() / total;
            let var = rows
                .iter()
                .map(|&(i, w)| {
                    let d = design.row(i)[j] - mean;
                    w * d * d
                })
                .sum::<f64>()
                / total;
            let sd = var.sqrt();
            // constant columns are aliased with the intercept and dropped
            if sd > 1e-10 * (1.0 + mean.abs()) {
                cols.push((j, mean, sd));
            }
        }
        let p = cols.len() + 1;
        let mut z = Vec::with_capacity(rows.len() * p);
        z.extend(std::iter::repeat_n(1.0, rows.len()));
        for &(j, m, s) in &cols {
            z.extend(rows.iter().map(|&(i, _)| (design.row(i)[j] - m) / s));
        }
        Standardized { rows, cols, z, p }
    }

    fn to_original(&self, beta: &[f64], n_cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_cols];
        out[0] = beta[0];
        for (k, &(j, m, s)) in self.cols.iter().enumerate() {
            let b = beta[k + 1] / s;
            out[j] = b;
            out[0] -= b * m;
        }
        out
    }

    fn standardize_coef(&self, coef: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; self.p];
        beta[0] = coef[0];
        for (k, &(j, m, s)) in self.cols.iter().enumerate() {
            beta[k + 1] = coef[j] * s;
            beta[0] += coef[j] * m;
        }
        beta
    }

    #[inline]
    fn col(&self, a: usize) -> &[f64] {
        let n = self.rows.len();
        &self.z[a * n..(a + 1) * n]
    }

    /// `out = Z beta + offset`.
    fn linear_into(&self, beta: &[f64], offset: &[f64], out: &mut [f64]) {
        out.copy_from_slice(offset);
        for (a, &b) in beta.iter().enumerate() {
            for (o, &z) in out.iter_mut().zip(self.col(a)) {
                *o += b * z;
            }
        }
    }
}

/// Solves `Z'WZ beta = Z'W z`, adding a growing ridge only if that fails.
fn weighted_least_squares(
    sd: &Standardized,
    work_w: &[f64],
    work_z: &[f64],
) -> Result<Vec<f64>, GlmError> {
    let p = sd.p;
    let mut xtwx = vec![0.0; p * p];
    let mut xtwz = vec![0.0; p];
    let mut weighted = vec![0.0; work_w.len()];
    for a in 0..p {
        for ((v, &w), &z) in weighted.iter_mut().zip(work_w).zip(sd.col(a)) {
            *v = w * z;
        }
        xtwz[a] = weighted.iter().zip(work_z).map(|(v, z)| v * z).sum();
        for b in 0..=a {
            xtwx[a * p + b] = weighted.iter().zip(sd.col(b)).map(|(v, z)| v * z).sum();
        }
    }
    // exact solve first; ridge only as a fallback, relative to the diagonal scale
    let scale = (0..p).map(|a| xtwx[a * p + a]).sum::<f64>() / p as f64;
    let mut ridge = 0.0;
    loop {
        let m = DMatrix::from_fn(p, p, |a, b| {
            let v = if b <= a {
                xtwx[a * p + b]
            } else {
                xtwx[b * p + a]
            };
            if a == b {
                v + ridge * scale
            } else {
                v
            }
        });
        let well_conditioned = |ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
            let l = ch.l_dirty();
            (0..p).all(|a| l[(a, a)] * l[(a, a)] > 1e-12 * scale)
        };
        if let Some(ch) = m.cholesky().filter(well_conditioned) {
            let beta = ch.solve(&DVector::from_column_slice(&xtwz));
            if beta.iter().all(|b| b.is_finite()) {
                return Ok(beta.iter().copied().collect());
            }
        }
        ridge = if ridge == 0.0 {
            RIDGE_START
        } else {
            ridge * 10.0
        };
        if ridge > RIDGE_MAX * (1.0 + 1e-9) {
            return Err(GlmError::SingularDesign(ridge / 10.0));
        }
    }
}

fn check_inputs(
    design: &DesignMatrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    family: Family,
) -> Result<(), GlmError> {
    let n = design.n_rows();
    if design.n_cols() == 0 {
        return Err(GlmError::DimensionMismatch("design has no columns".into()));
    }
    if response.len() != n || weights.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(GlmError::DimensionMismatch(format!(
            "design has {n} rows; response {}, weights {}, offset {:?}",
            response.len(),
            weights.len(),
            offset.map(|o| o.len())
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|w| *w > 0.0) {
        return Err(GlmError::InvalidWeights);
    }
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let y = response[i];
        if !y.is_finite()
            || design.row(i).iter().any(|x| !x.is_finite())
            || offset.is_some_and(|o| !o[i].is_finite())
        {
            return Err(GlmError::NonFinite);
        }
        if family == Family::Binomial && !(0.0..=1.0).contains(&y) {
            return Err(GlmError::InvalidResponse(y));
        }
    }
    Ok(())
}

pub fn fit_glm(
    design: &DesignMatrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    family: Family,
) -> Result<GlmFit, GlmError> {
    fit_glm_with(
        design,
        response,
        weights,
        offset,
        family,
        &GlmOptions::default(),
    )
}

pub fn fit_glm_with(
    design: &DesignMatrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    family: Family,
    opts: &GlmOptions,
) -> Result<GlmFit, GlmError> {
    check_inputs(design, response, weights, offset, family)?;
    let sd = Standardized::new(design, weights);
    let nr = sd.rows.len();
    let y: Vec<f64> = sd.rows.iter().map(|&(i, _)| response[i]).collect();
    let w: Vec<f64> = sd.rows.iter().map(|&(_, w)| w).collect();
    let off: Vec<f64> = match offset {
        Some(o) => sd.rows.iter().map(|&(i, _)| o[i]).collect(),
        None => vec![0.0; nr],
    };

    if family == Family::Gaussian {
        let z: Vec<f64> = y.iter().zip(&off).map(|(y, o)| y - o).collect();
        let beta = weighted_least_squares(&sd, &w, &z)?;
        let mut fitted = vec![0.0; nr];
        sd.linear_into(&beta, &off, &mut fitted);
        let deviance = (0..nr)
            .map(|r| w[r] * unit_deviance(family, y[r], fitted[r]))
            .sum();
        return Ok(GlmFit {
            family,
            coefficients: sd.to_original(&beta, design.n_cols()),
            converged: true,
            iterations: 1,
            deviance,
        });
    }

    // Degenerate binomial response: the MLE is at infinity, cap it.
    if off.iter().all(|o| *o == 0.0) {
        let all = |v: f64| y.iter().all(|&yi| yi == v);
        let cap = if all(1.0) {
            Some(LOGIT_CAP)
        } else if all(0.0) {
            Some(-LOGIT_CAP)
        } else {
            None
        };
        if let Some(c) = cap {
            let mut coefficients = vec![0.0; design.n_cols()];
            coefficients[0] = c;
            let deviance = w
                .iter()
                .zip(&y)
                .map(|(wi, yi)| wi * unit_deviance(family, *yi, mean_fn(family, c)))
                .sum();
            return Ok(GlmFit {
                family,
                coefficients,
                converged: true,
                iterations: 0,
                deviance,
            });
        }
    }

    // fills `mu` from `eta` and returns the deviance
    let deviance_into = |eta: &[f64], mu: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for r in 0..nr {
            mu[r] = mean_fn(family, eta[r]);
            total += w[r] * unit_deviance(family, y[r], mu[r]);
        }
        total
    };
    let eta_into = |beta: &[f64], eta: &mut [f64]| {
        sd.linear_into(beta, &off, eta);
        for e in eta.iter_mut() {
            *e = e.clamp(-LOGIT_CAP, LOGIT_CAP);
        }
    };

    let mut eta = vec![0.0; nr];
    let mut beta = match &opts.start {
        Some(start) if start.len() == design.n_cols() => {
            let b = sd.standardize_coef(start);
            eta_into(&b, &mut eta);
            b
        }
        _ => {
            for (e, &yi) in eta.iter_mut().zip(&y) {
                *e = logit((yi + 0.5) / 2.0);
            }
            vec![0.0; sd.p]
        }
    };
    let mut mu = vec![0.0; nr];
    let mut dev = deviance_into(&eta, &mut mu);
    let mut best = (beta.clone(), dev);
    let mut converged = false;
    let mut iterations = 0;
    let mut work_w = vec![0.0; nr];
    let mut work_z = vec![0.0; nr];
    let mut new_eta = vec![0.0; nr];
    let mut new_mu = vec![0.0; nr];

    while iterations < opts.max_iter {
        iterations += 1;
        for r in 0..nr {
            let v = (mu[r] * (1.0 - mu[r])).max(1e-12);
            work_w[r] = w[r] * v;
            work_z[r] = eta[r] - off[r] + (y[r] - mu[r]) / v;
        }
        let mut new_beta = weighted_least_squares(&sd, &work_w, &work_z)?;
        eta_into(&new_beta, &mut new_eta);
        let mut new_dev = deviance_into(&new_eta, &mut new_mu);
        let mut halvings = 0;
        while !(new_dev.is_finite() && new_dev <= dev * (1.0 + 1e-12) + 1e-300)
            && halvings < 30
            && iterations > 1
        {
            for (nb, b) in new_beta.iter_mut().zip(&beta) {
                *nb = 0.5 * (*nb + b);
            }
            eta_into(&new_beta, &mut new_eta);
            new_dev = deviance_into(&new_eta, &mut new_mu);
            halvings += 1;
        }
        let change = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        beta = new_beta;
        std::mem::swap(&mut eta, &mut new_eta);
        std::mem::swap(&mut mu, &mut new_mu);
        dev = new_dev;
        if dev <= best.1 || iterations == 1 {
            best = (beta.clone(), dev);
        }
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let (beta, dev) = if converged { (beta, dev) } else { best };
    Ok(GlmFit {
        family,
        coefficients: sd.to_original(&beta, design.n_cols()),
        converged,
        iterations,
        deviance: dev,
    })
}

impl GlmFit {
    /// Linear predictor for one design row (no offset).
    #[inline]
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    /// Mean-scale prediction for one row.
    #[inline]
    pub fn predict_row(&self, row: &[f64], offset: f64) -> f64 {
        mean_fn(self.family, self.linear_predictor(row) + offset)
    }
}

/// Mean-scale predictions: identity for Gaussian, expit for binomial.
pub fn predict_glm(
    fit: &GlmFit,
    design: &DesignMatrix,
    offset: Option<&[f64]>,
) -> Result<Vec<f64>, GlmError> {
    if design.n_cols() != fit.coefficients.len() {
        return Err(GlmError::DimensionMismatch(format!(
            "design width {} but {} coefficients",
            design.n_cols(),
            fit.coefficients.len()
        )));
    }
    if offset.is_some_and(|o| o.len() != design.n_rows()) {
        return Err(GlmError::DimensionMismatch("offset length".into()));
    }
    Ok(design
        .rows()
        .enumerate()
        .map(|(i, row)| fit.predict_row(row, offset.map_or(0.0, |o| o[i])))
        .collect())
}

/// `max_j |sum_i w_i x_ij (y_i - mu_i)|`, the score check used in tests.
pub fn score_norm(
    fit: &GlmFit,
    design: &DesignMatrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
) -> f64 {
    let mut score = vec![0.0; design.n_cols()];
    for (i, row) in design.rows().enumerate() {
        let mu = fit.predict_row(row, offset.map_or(0.0, |o| o[i]));
        let r = weights[i] * (response[i] - mu);
        for (s, x) in score.iter_mut().zip(row) {
            *s += x * r;
        }
    }
    score.iter().fold(0.0, |m, s| m.max(s.abs()))
}

pub fn deviance(
    family: Family,
    coefficients: &[f64],
    design: &DesignMatrix,
    response: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
) -> f64 {
    design
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let eta: f64 = row
                .iter()
                .zip(coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                + offset.map_or(0.0, |o| o[i]);
            weights[i] * unit_deviance(family, response[i], mean_fn(family, eta))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept(n: usize) -> DesignMatrix {
        DesignMatrix::from_rows(&vec![vec![1.0]; n]).unwrap()
    }

    #[test]
    fn gaussian_intercept_is_mean() {
        let fit = fit_glm(
            &intercept(3),
            &[1.0, 2.0, 3.0],
            &[1.0; 3],
            None,
            Family::Gaussian,
        )
        .unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        let pred = predict_glm(&fit, &intercept(4), None).unwrap();
        assert!(pred.iter().all(|p| (p - 2.0).abs() < 1e-12));
    }

    #[test]
    fn binomial_intercept_symmetric() {
        let fit = fit_glm(
            &intercept(2),
            &[0.0, 1.0],
            &[1.0; 2],
            None,
            Family::Binomial,
        )
        .unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-10);
        let pred = predict_glm(&fit, &intercept(1), None).unwrap();
        assert_relative_eq!(pred[0], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn gaussian_offset_gives_weighted_mean_of_residual() {
        let y = [1.0, 4.0, 2.5, -1.0];
        let o = [0.5, 1.0, -2.0, 0.25];
        let w = [1.0, 2.0, 0.5, 3.0];
        let fit = fit_glm(&intercept(4), &y, &w, Some(&o), Family::Gaussian).unwrap();
        let expected: f64 = y
            .iter()
            .zip(&o)
            .zip(&w)
            .map(|((y, o), w)| w * (y - o))
            .sum::<f64>()
            / w.iter().sum::<f64>();
        assert_relative_eq!(fit.coefficients[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let fit = GlmFit {
            family: Family::Binomial,
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            deviance: 0.0,
        };
        let d = DesignMatrix::from_rows(&[vec![1.0, 3.0], vec![1.0, -2.0]]).unwrap();
        assert_eq!(predict_glm(&fit, &d, None).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn expit_of_minus_half() {
        let fit = GlmFit {
            family: Family::Binomial,
            coefficients: vec![-1.0, 0.25],
            converged: true,
            iterations: 0,
            deviance: 0.0,
        };
        let d = DesignMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let p = predict_glm(&fit, &d, None).unwrap()[0];
        // 1 / (1 + e^0.5)
        assert_relative_eq!(p, 0.377_540_668_798_145_4, epsilon = 1e-15);
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            fit_glm(
                &intercept(3),
                &[1.0, 2.0],
                &[1.0; 3],
                None,
                Family::Gaussian
            ),
            Err(GlmError::DimensionMismatch(_))
        ));
        assert_eq!(
            fit_glm(
                &intercept(2),
                &[0.0, 2.0],
                &[1.0; 2],
                None,
                Family::Binomial
            ),
            Err(GlmError::InvalidResponse(2.0))
        );
        assert_eq!(
            fit_glm(
                &intercept(2),
                &[0.0, 1.0],
                &[0.0; 2],
                None,
                Family::Binomial
            ),
            Err(GlmError::InvalidWeights)
        );
        let fit = fit_glm(
            &intercept(2),
            &[0.0, 1.0],
            &[1.0; 2],
            None,
            Family::Binomial,
        )
        .unwrap();
        let wide = DesignMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(predict_glm(&fit, &wide, None).is_err());
    }

    #[test]
    fn collinear_columns_do_not_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                vec![1.0, x, 2.0 * x, 3.0]
            })
            .collect();
        let d = DesignMatrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + r[1]).collect();
        let fit = fit_glm(&d, &y, &vec![1.0; 50], None, Family::Gaussian).unwrap();
        let pred = predict_glm(&fit, &d, None).unwrap();
        for (p, y) in pred.iter().zip(&y) {
            assert!((p - y).abs() < 1e-6);
        }
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn separated_binomial_stays_finite_and_strict() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let d = DesignMatrix::from_rows(&rows).unwrap();
        let fit = fit_glm(&d, &y, &[1.0; 20], None, Family::Binomial).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
        let pred = predict_glm(&fit, &d, None).unwrap();
        assert!(pred.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn constant_binomial_response_is_capped() {
        let fit = fit_glm(&intercept(5), &[1.0; 5], &[1.0; 5], None, Family::Binomial).unwrap();
        let p = predict_glm(&fit, &intercept(1), None).unwrap()[0];
        assert!(p < 1.0 && p > 1.0 - 1e-12);
    }

    fn logistic_data(n: usize, seed: u64) -> (DesignMatrix, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        let mut o = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.random_range(-2.0..2.0);
            let x2: f64 = rng.random_range(0.0..10.0);
            let off: f64 = rng.random_range(-0.5..0.5);
            let p = expit(-0.3 + 0.8 * x1 - 0.1 * x2 + off);
            y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            rows.push(vec![1.0, x1, x2]);
            w.push(rng.random_range(0.5..2.0));
            o.push(off);
        }
        (DesignMatrix::from_rows(&rows).unwrap(), y, w, o)
    }

    #[test]
    fn score_equations_hold_at_convergence() {
        let (d, y, w, o) = logistic_data(500, 11);
        let fit = fit_glm(&d, &y, &w, Some(&o), Family::Binomial).unwrap();
        assert!(fit.converged);
        assert!(score_norm(&fit, &d, &y, &w, Some(&o)) <= 1e-8 * 500.0);
    }

    #[test]
    fn deviance_gradient_matches_finite_differences() {
        let (d, y, w, o) = logistic_data(400, 3);
        let fit = fit_glm(&d, &y, &w, Some(&o), Family::Binomial).unwrap();
        // analytic gradient of deviance is -2 X'W(y - mu), ~0 at the optimum;
        // compare it with central differences at a perturbed point too
        let mut beta = fit.coefficients.clone();
        beta[1] += 0.1;
        let mut analytic = [0.0; 3];
        for (i, row) in d.rows().enumerate() {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>() + o[i];
            let r = w[i] * (y[i] - expit(eta));
            for j in 0..3 {
                analytic[j] -= 2.0 * row[j] * r;
            }
        }
        for j in 0..3 {
            let h = 1e-5;
            let mut up = beta.clone();
            up[j] += h;
            let mut dn = beta.clone();
            dn[j] -= h;
            let fd = (deviance(Family::Binomial, &up, &d, &y, &w, Some(&o))
                - deviance(Family::Binomial, &dn, &d, &y, &w, Some(&o)))
                / (2.0 * h);
            assert!(
                (fd - analytic[j]).abs() <= 1e-5 * analytic[j].abs().max(1.0),
                "{fd} vs {}",
                analytic[j]
            );
        }
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let (d, y, w, o) = logistic_data(300, 8);
        let cold = fit_glm(&d, &y, &w, Some(&o), Family::Binomial).unwrap();
        let opts = GlmOptions {
            start: Some(vec![0.1, 0.5, 0.0]),
            ..GlmOptions::default()
        };
        let warm = fit_glm_with(&d, &y, &w, Some(&o), Family::Binomial, &opts).unwrap();
        for (a, b) in cold.coefficients.iter().zip(&warm.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn row_permutation_invariance(seed in 0u64..1000, shift in 1usize..99) {
            let (d, y, w, o) = logistic_data(100, seed);
            let fit = fit_glm(&d, &y, &w, Some(&o), Family::Binomial).unwrap();
            let perm: Vec<usize> = (0..100).map(|i| (i + shift) % 100).collect();
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| d.row(i).to_vec()).collect();
            let dp = DesignMatrix::from_rows(&rows).unwrap();
            let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let fit2 = fit_glm(&dp, &pick(&y), &pick(&w), Some(&pick(&o)), Family::Binomial).unwrap();
            for (a, b) in fit.coefficients.iter().zip(&fit2.coefficients) {
                prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
            }
            let pred = predict_glm(&fit, &d, Some(&o)).unwrap();
            prop_assert!(pred.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }
}
