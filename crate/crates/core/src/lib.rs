//! Subgroup discovery for longitudinal data.
//!
//! Finds baseline-covariate subgroups whose causal effect of a time-varying
//! treatment regime differs, using interaction trees driven by longitudinal
//! TMLE (or IPW / g-computation), split-complexity pruning and honest
//! estimation on a held-out sample.

#[cfg(feature = "cli")]
pub mod cli;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod panel_data;
pub mod simulation;
pub mod tree;

mod parallel;
