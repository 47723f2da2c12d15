//! Two-period data-generating process with effect modification by the
//! second baseline covariate.
//!
//! Baseline `x1..x5` are standard normal with pairwise correlation 0.2.
//! Period 1 records `(y1, l_1, l_2)`: an interim outcome and two
//! confounders. Treatment and dropout depend on the past; the final outcome
//! depends on both treatments, with an extra `-2` per treated period when
//! `x2 > 0.5`. Censoring is realized given the observed treatments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::glm::expit;
use crate::panel_data::{PanelDataset, PeriodRecord, Schema, SubjectRecord, TreatmentRegime};

pub const N_BASELINE: usize = 5;
/// Index of the effect modifier among the baseline covariates.
pub const MODIFIER: usize = 1;
pub const MODIFIER_CUTPOINT: f64 = 0.5;

const BASELINE_CORRELATION: f64 = 0.2;
const L1_VARIANCE: f64 = 0.4;

/// Whether the outcome equations include the effect-modification terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Modified,
    /// Same process with every modification term removed: effect 1.0 for all.
    Homogeneous,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "modified" => Ok(Variant::Modified),
            "homogeneous" | "null" => Ok(Variant::Homogeneous),
            other => Err(format!(
                "unknown variant `{other}` (expected modified or homogeneous)"
            )),
        }
    }
}

pub fn simulation_schema() -> Schema {
    Schema::new(
        (1..=N_BASELINE).map(|j| format!("x{j}")).collect(),
        vec![vec![], vec!["y1".into(), "l_1".into(), "l_2".into()]],
    )
    .expect("fixed schema is valid")
}

/// Equicorrelated normal draw: `sqrt(1 - rho) z_j + sqrt(rho) z_0`.
pub fn draw_baseline<R: Rng>(rng: &mut R) -> Vec<f64> {
    let shared: f64 = rng.sample(StandardNormal);
    let own = (1.0 - BASELINE_CORRELATION).sqrt();
    let common = BASELINE_CORRELATION.sqrt() * shared;
    (0..N_BASELINE)
        .map(|_| own * rng.sample::<f64, _>(StandardNormal) + common)
        .collect()
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn normal<R: Rng>(rng: &mut R, mean: f64, variance: f64) -> f64 {
    mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn p_treat0(x: &[f64]) -> f64 {
    expit(-0.5 + 0.2 * x[0] + 0.2 * x[1] + 0.4 * x[2] + 0.5 * x[3])
}

pub(crate) fn p_censor0(x: &[f64], a0: bool) -> f64 {
    expit(-4.0 + 0.8 * indicator(a0) + 0.3 * x[0] - 0.3 * x[1] - 0.3 * x[2] + 0.1 * x[3])
}

struct Period1 {
    y1: f64,
    l1: f64,
    l2: f64,
}

fn draw_period1<R: Rng>(rng: &mut R, x: &[f64], a0: bool, modifier: f64) -> Period1 {
    let a0 = indicator(a0);
    let y1 = normal(
        rng,
        -3.0 + 0.1 * a0 + 0.3 * x[0] - 2.0 * a0 * modifier + 2.0 * x[3] + 2.0 * x[4],
        1.0,
    );
    let l1 = normal(
        rng,
        0.2 * a0 + 0.5 * x[0] - 0.4 * x[1] - 0.4 * x[2] + 0.5 * x[3] - 0.5 * x[4],
        L1_VARIANCE,
    );
    let l2 = normal(
        rng,
        0.1 * a0 + 0.1 * x[0] + 0.1 * x[1] - 0.4 * x[2] + 0.5 * l1 - 0.5 * x[4],
        L1_VARIANCE,
    );
    Period1 { y1, l1, l2 }
}

fn p_treat1(x: &[f64], p: &Period1) -> f64 {
    expit(-1.0 + 0.1 * x[0] + 0.1 * x[1] + 0.2 * x[2] + 0.2 * x[3] - p.l1 - 0.5 * p.l2)
}

fn p_censor1(x: &[f64], a0: bool, a1: bool, p: &Period1) -> f64 {
    expit(
        -4.0 + 0.3 * indicator(a0) + 0.5 * indicator(a1) + 0.3 * x[0] - 0.3 * x[1] - 0.3 * x[2]
            + 0.1 * p.l1
            + 0.1 * x[4],
    )
}

fn outcome_mean(x: &[f64], a0: bool, a1: bool, p: &Period1, modifier: f64) -> f64 {
    let (a0, a1) = (indicator(a0), indicator(a1));
    -2.0 + 0.1 * a0 + 0.1 * a1 + 0.3 * x[0] - 2.0 * a0 * modifier - 2.0 * a1 * modifier - 0.3 * x[2]
        + 2.0 * p.l1
        + 2.0 * p.l2
}

fn modifier_term(x: &[f64], variant: Variant) -> f64 {
    match variant {
        Variant::Modified => indicator(x[MODIFIER] > MODIFIER_CUTPOINT),
        Variant::Homogeneous => 0.0,
    }
}

fn draw_subject<R: Rng>(rng: &mut R, id: usize, variant: Variant) -> SubjectRecord {
    let x = draw_baseline(rng);
    let m = modifier_term(&x, variant);
    let a0 = bernoulli(rng, p_treat0(&x));
    let c0 = bernoulli(rng, p_censor0(&x, a0));
    let mut periods = vec![PeriodRecord {
        covariates: vec![],
        treatment: a0,
        censored: c0,
    }];
    let mut outcome = None;
    if !c0 {
        let p1 = draw_period1(rng, &x, a0, m);
        let a1 = bernoulli(rng, p_treat1(&x, &p1));
        let c1 = bernoulli(rng, p_censor1(&x, a0, a1, &p1));
        if !c1 {
            outcome = Some(normal(rng, outcome_mean(&x, a0, a1, &p1, m), 1.0));
        }
        periods.push(PeriodRecord {
            covariates: vec![p1.y1, p1.l1, p1.l2],
            treatment: a1,
            censored: c1,
        });
    }
    SubjectRecord {
        subject_id: (id + 1).to_string(),
        baseline: x,
        periods,
        outcome,
    }
}

pub fn simulate_variant(n: usize, seed: u64, variant: Variant) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..n).map(|i| draw_subject(&mut rng, i, variant)).collect();
    PanelDataset::new(simulation_schema(), subjects).expect("generator respects monotone dropout")
}

pub fn simulate_modified(n: usize, seed: u64) -> PanelDataset {
    simulate_variant(n, seed, Variant::Modified)
}

pub fn simulate_null(n: usize, seed: u64) -> PanelDataset {
    simulate_variant(n, seed, Variant::Homogeneous)
}

/// Effect of always-treated versus never-treated at baseline `l0`, from the
/// closed form of the outcome equations.
pub fn true_effect(l0: &[f64], variant: Variant) -> f64 {
    // direct 0.1 + 0.1, through l_1 (2 * 0.2) and l_2 (2 * (0.1 + 0.5 * 0.2))
    1.0 - 4.0 * modifier_term(l0, variant)
}

pub fn true_effect_modified(l0: &[f64]) -> f64 {
    assert_eq!(
        l0.len(),
        N_BASELINE,
        "baseline vector must have five entries"
    );
    true_effect(l0, Variant::Modified)
}

/// Monte Carlo mean of the outcome under `regime` with dropout abolished,
/// holding the baseline at `l0`.
pub fn potential_outcome_mean(
    l0: &[f64],
    regime: &TreatmentRegime,
    variant: Variant,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = modifier_term(l0, variant);
    let (a0, a1) = (regime.values[0], regime.values[1]);
    let ys: Vec<f64> = (0..draws)
        .map(|_| {
            let p1 = draw_period1(&mut rng, l0, a0, m);
            normal(&mut rng, outcome_mean(l0, a0, a1, &p1, m), 1.0)
        })
        .collect();
    let mean = ys.iter().sum::<f64>() / draws as f64;
    let sd = (crate::estimators::sample_variance(&ys) / draws as f64).sqrt();
    (mean, sd)
}

/// Population mean of the potential outcome under `regime` by Monte Carlo
/// over the baseline law as well.
pub fn population_potential_mean(
    regime: &TreatmentRegime,
    variant: Variant,
    draws: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a0, a1) = (regime.values[0], regime.values[1]);
    (0..draws)
        .map(|_| {
            let x = draw_baseline(&mut rng);
            let m = modifier_term(&x, variant);
            let p1 = draw_period1(&mut rng, &x, a0, m);
            outcome_mean(&x, a0, a1, &p1, m)
        })
        .sum::<f64>()
        / draws as f64
}
