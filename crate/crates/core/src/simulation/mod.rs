//! Simulation study: the two-period data-generating process with a single
//! effect modifier, structure metrics for fitted trees and a replicate
//! driver.

mod dgp;
mod metrics;
mod study;

pub use dgp::{
    draw_baseline, population_potential_mean, potential_outcome_mean, simulate_modified,
    simulate_null, simulate_variant, simulation_schema, true_effect, true_effect_modified, Variant,
    MODIFIER, MODIFIER_CUTPOINT, N_BASELINE,
};
pub use metrics::{
    correct_partition, evaluate_tree, pairwise_similarity, SimMetrics, TreeEvaluation,
};
pub use study::{
    aggregate, run_replicate, run_simulation_study, write_replicate_log, ReplicateOutcome,
    ReplicateRecord, StudyConfig, StudyResult, REPLICATE_LOG_HEADER,
};
