//! Longitudinal panel data with monotone dropout.
//!
//! Each subject contributes `(L0, A0, C0, L1, A1, C1, ..., LK, AK, CK, Y)`.
//! Baseline covariates `L0` define subgroups; time-varying covariates are
//! recorded per period. Once `C_k = 1` nothing later is observed.
//!
//! Missing covariate values are stored as `NaN`.

mod csv_io;
mod preprocess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_panel_csv, read_panel_csv, write_panel_csv, write_panel_csv_with_header};
pub use preprocess::{locf_impute, split_dataset, split_indices};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("subject `{subject}` has data after dropout at period {period}")]
    NonMonotoneCensoring { subject: String, period: usize },
    #[error("malformed value {value:?} in column `{column}` (row {row})")]
    MalformedValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("invalid split fractions {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("monotone dropout violated: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("schema file: {0}")]
    SchemaFile(String),
}

/// Column layout shared by every subject of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Number of treatment periods `K`; periods run `0..=K`.
    pub horizon: usize,
    pub baseline: Vec<String>,
    /// Time-varying covariate names for each period `0..=K`. Period 0 usually
    /// has none, since its covariates are the baseline vector.
    pub time_varying: Vec<Vec<String>>,
}

impl Schema {
    pub fn new(baseline: Vec<String>, time_varying: Vec<Vec<String>>) -> Result<Self, DataError> {
        if time_varying.is_empty() {
            return Err(DataError::SchemaMismatch(
                "time_varying must list periods 0..=K".into(),
            ));
        }
        let schema = Schema {
            horizon: time_varying.len() - 1,
            baseline,
            time_varying,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), DataError> {
        if self.time_varying.len() != self.horizon + 1 {
            return Err(DataError::SchemaMismatch(format!(
                "horizon {} needs {} time-varying period lists, found {}",
                self.horizon,
                self.horizon + 1,
                self.time_varying.len()
            )));
        }
        let mut period0: Vec<&String> = self.baseline.iter().chain(&self.time_varying[0]).collect();
        period0.sort();
        if period0.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::SchemaMismatch(
                "duplicate covariate name in period 0".into(),
            ));
        }
        for (k, names) in self.time_varying.iter().enumerate().skip(1) {
            let mut sorted: Vec<&String> = names.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(DataError::SchemaMismatch(format!(
                    "duplicate covariate name in period {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_baseline(&self) -> usize {
        self.baseline.len()
    }

    /// Reads a TOML schema sidecar.
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| DataError::SchemaFile(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DataError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Same schema cut down to periods `0..=horizon`.
    pub fn truncated(&self, horizon: usize) -> Schema {
        Schema {
            horizon,
            baseline: self.baseline.clone(),
            time_varying: self.time_varying[..=horizon].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub covariates: Vec<f64>,
    pub treatment: bool,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub baseline: Vec<f64>,
    pub periods: Vec<PeriodRecord>,
    pub outcome: Option<f64>,
}

impl SubjectRecord {
    /// True when the subject has not dropped out before period `k`
    /// (`C_0 = ... = C_{k-1} = 0`). For `k = K + 1` this means the outcome is
    /// observed.
    #[inline]
    pub fn at_risk(&self, k: usize) -> bool {
        match k.checked_sub(1) {
            None => true,
            Some(prev) => self.periods.get(prev).is_some_and(|p| !p.censored),
        }
    }

    /// Whether the observed treatments match `regime` on periods `0..=k` and
    /// the subject remained uncensored through period `k`.
    pub fn follows(&self, regime: &TreatmentRegime, k: usize) -> bool {
        (0..=k).all(|j| {
            self.periods
                .get(j)
                .is_some_and(|p| !p.censored && p.treatment == regime.values[j])
        })
    }
}

/// A diagnostic produced by [`validate_monotone_censoring`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject_id: String,
    pub period: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A later period exists after `C_k = 1`.
    DataAfterDropout,
    /// The outcome is present although the subject dropped out.
    OutcomeAfterDropout,
    /// Uncensored through `K` but the outcome is absent.
    MissingOutcome,
    /// Trajectory ends before `K` without a dropout.
    EndsWithoutDropout,
    /// More than `K + 1` periods, or wrong vector widths.
    ShapeMismatch,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "subject {} period {}: {:?}",
            self.subject_id, self.period, self.kind
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub schema: Schema,
    pub subjects: Vec<SubjectRecord>,
}

impl PanelDataset {
    /// Builds a dataset, rejecting anything that breaks monotone dropout.
    pub fn new(schema: Schema, subjects: Vec<SubjectRecord>) -> Result<Self, DataError> {
        schema.check()?;
        let d = PanelDataset { schema, subjects };
        if let Some(v) = validate_monotone_censoring(&d).into_iter().next() {
            return Err(DataError::InvalidDataset(v.to_string()));
        }
        Ok(d)
    }

    pub fn horizon(&self) -> usize {
        self.schema.horizon
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Subset by subject index, keeping the given order.
    pub fn subset(&self, indices: &[usize]) -> PanelDataset {
        PanelDataset {
            schema: self.schema.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    pub fn n_uncensored(&self) -> usize {
        self.subjects.iter().filter(|s| s.outcome.is_some()).count()
    }

    /// Restricts the data to periods `0..=horizon`, using the time-varying
    /// covariate `outcome_name` from period `horizon + 1` as the outcome.
    /// Asking for the full horizon returns a clone.
    pub fn truncate_horizon(
        &self,
        horizon: usize,
        outcome_name: Option<&str>,
    ) -> Result<Self, DataError> {
        let k_max = self.horizon();
        if horizon > k_max {
            return Err(DataError::SchemaMismatch(format!(
                "horizon {horizon} exceeds dataset horizon {k_max}"
            )));
        }
        if horizon == k_max {
            return Ok(self.clone());
        }
        let name = outcome_name.ok_or_else(|| {
            DataError::SchemaMismatch(
                "an interim outcome covariate is required for prefix horizons".into(),
            )
        })?;
        let col = self.schema.time_varying[horizon + 1]
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::UnknownCovariate(name.to_string()))?;
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut periods: Vec<PeriodRecord> =
                    s.periods.iter().take(horizon + 1).cloned().collect();
                let uncensored = periods.len() == horizon + 1 && !periods[horizon].censored;
                let mut outcome = None;
                if uncensored {
                    // the next period exists because C_horizon = 0
                    let y = s.periods[horizon + 1].covariates[col];
                    if y.is_nan() {
                        // unobserved interim outcome is treated as dropout
                        periods[horizon].censored = true;
                    } else {
                        outcome = Some(y);
                    }
                }
                SubjectRecord {
                    subject_id: s.subject_id.clone(),
                    baseline: s.baseline.clone(),
                    periods,
                    outcome,
                }
            })
            .collect();
        Ok(PanelDataset {
            schema: self.schema.truncated(horizon),
            subjects,
        })
    }
}

/// Lists every subject/period that breaks the monotone-dropout structure or
/// the schema widths. Empty iff the dataset is well formed.
pub fn validate_monotone_censoring(d: &PanelDataset) -> Vec<Violation> {
    let k_max = d.schema.horizon;
    let mut out = Vec::new();
    for s in &d.subjects {
        let mut push = |period, kind| {
            out.push(Violation {
                subject_id: s.subject_id.clone(),
                period,
                kind,
            })
        };
        if s.baseline.len() != d.schema.baseline.len() {
            push(0, ViolationKind::ShapeMismatch);
        }
        if s.periods.is_empty() || s.periods.len() > k_max + 1 {
            push(
                s.periods.len().saturating_sub(1),
                ViolationKind::ShapeMismatch,
            );
            continue;
        }
        for (k, p) in s.periods.iter().enumerate() {
            if p.covariates.len() != d.schema.time_varying[k].len() {
                push(k, ViolationKind::ShapeMismatch);
            }
        }
        let last = s.periods.len() - 1;
        for (k, p) in s.periods[..last].iter().enumerate() {
            if p.censored {
                push(k, ViolationKind::DataAfterDropout);
            }
        }
        let dropped = s.periods[last].censored;
        match (dropped, s.outcome.is_some()) {
            (true, true) => push(last, ViolationKind::OutcomeAfterDropout),
            (false, _) if last < k_max => push(last, ViolationKind::EndsWithoutDropout),
            (false, false) => push(last, ViolationKind::MissingOutcome),
            _ => {}
        }
        if let Some(y) = s.outcome {
            if !y.is_finite() {
                push(last, ViolationKind::MissingOutcome);
            }
        }
    }
    out
}

/// A static regime `(a_0, ..., a_K)`; censoring is always abolished.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreatmentRegime {
    pub values: Vec<bool>,
}

impl TreatmentRegime {
    pub fn new(values: Vec<bool>) -> Self {
        TreatmentRegime { values }
    }

    pub fn always(horizon: usize) -> Self {
        TreatmentRegime::new(vec![true; horizon + 1])
    }

    pub fn never(horizon: usize) -> Self {
        TreatmentRegime::new(vec![false; horizon + 1])
    }

    pub fn check(&self, horizon: usize) -> Result<(), DataError> {
        if self.values.len() != horizon + 1 {
            return Err(DataError::SchemaMismatch(format!(
                "regime of length {} for horizon {}",
                self.values.len(),
                horizon
            )));
        }
        Ok(())
    }

    pub fn truncated(&self, horizon: usize) -> Self {
        TreatmentRegime::new(self.values[..=horizon].to_vec())
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }
}

impl std::fmt::Display for TreatmentRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.values {
            f.write_str(if *v { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for TreatmentRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' '))
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid regime character {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("empty regime".into());
        }
        Ok(TreatmentRegime::new(values))
    }
}

impl Serialize for TreatmentRegime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TreatmentRegime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = ">=")]
    GreaterEq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub covariate: usize,
    pub relation: Relation,
    pub cutpoint: f64,
}

impl Condition {
    #[inline]
    pub fn holds(&self, l0: &[f64]) -> bool {
        let x = l0[self.covariate];
        match self.relation {
            Relation::Less => x < self.cutpoint,
            Relation::GreaterEq => x >= self.cutpoint,
        }
    }
}

/// Conjunction of axis-aligned conditions on baseline covariates. The empty
/// conjunction is the whole population.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub conditions: Vec<Condition>,
}

impl Subgroup {
    pub fn root() -> Self {
        Subgroup::default()
    }

    pub fn with(&self, condition: Condition) -> Self {
        let mut conditions = self.conditions.clone();
        conditions.push(condition);
        Subgroup { conditions }
    }

    pub fn contains(&self, l0: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(l0))
    }

    pub fn check(&self, n_baseline: usize) -> Result<(), DataError> {
        match self.conditions.iter().find(|c| c.covariate >= n_baseline) {
            Some(c) => Err(DataError::SchemaMismatch(format!(
                "condition on covariate {} but only {} baseline covariates",
                c.covariate, n_baseline
            ))),
            None => Ok(()),
        }
    }

    /// Indices of the subjects of `d` that fall in this subgroup.
    pub fn members(&self, d: &PanelDataset) -> Vec<usize> {
        d.subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| self.contains(&s.baseline))
            .map(|(i, _)| i)
            .collect()
    }

    /// Human-readable conjunction, e.g. `x2 < 0.5 & x1 >= 0`.
    pub fn describe(&self, names: &[String]) -> String {
        if self.conditions.is_empty() {
            return "all".to_string();
        }
        self.conditions
            .iter()
            .map(|c| {
                let name = names
                    .get(c.covariate)
                    .cloned()
                    .unwrap_or_else(|| format!("L0[{}]", c.covariate));
                let rel = match c.relation {
                    Relation::Less => "<",
                    Relation::GreaterEq => ">=",
                };
                format!("{name} {rel} {}", c.cutpoint)
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}
