use serde::{Deserialize, Serialize};

use crate::estimators::{EstimatorConfig, Method};
use crate::inference::SdldConfig;
use crate::panel_data::TreatmentRegime;
use crate::simulation::{StudyConfig, Variant};
use crate::tree::{TreeConfig, CHI2_1_95};

/// Flat run configuration shared by every subcommand. Each subcommand reads
/// the keys it needs and ignores the rest; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub estimator: Method,
    pub lambda: f64,
    /// Subject shares for (build, validation, estimation).
    pub fractions: [f64; 3],
    pub min_node_size: usize,
    pub min_regime_followers: usize,
    pub max_depth: usize,
    pub cutpoint_grid: usize,
    pub truncation_bound: f64,
    pub bootstrap_samples: usize,
    pub level: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treated: Option<TreatmentRegime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<TreatmentRegime>,
    // simulation study
    pub n_build: usize,
    pub n_validate: usize,
    pub replicates: usize,
    pub eval_size: usize,
    pub variant: Variant,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sdld = SdldConfig::default();
        let tree = TreeConfig::default();
        let study = StudyConfig::default();
        RunConfig {
            estimator: Method::Tmle,
            lambda: CHI2_1_95,
            fractions: sdld.fractions,
            min_node_size: tree.min_node_size,
            min_regime_followers: tree.min_regime_followers,
            max_depth: tree.max_depth,
            cutpoint_grid: tree.n_cutpoints,
            truncation_bound: tree.estimator.truncation_bound,
            bootstrap_samples: sdld.bootstrap_samples,
            level: sdld.level,
            seed: sdld.seed,
            treated: None,
            control: None,
            n_build: study.n_build,
            n_validate: study.n_validate,
            replicates: study.replicates,
            eval_size: study.eval_size,
            variant: study.variant,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Single-line JSON form embedded in every artifact.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            method: self.estimator,
            truncation_bound: self.truncation_bound,
            ..EstimatorConfig::default()
        }
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            min_node_size: self.min_node_size,
            min_regime_followers: self.min_regime_followers,
            max_depth: self.max_depth,
            n_cutpoints: self.cutpoint_grid,
            treated: self.treated.clone(),
            control: self.control.clone(),
            estimator: self.estimator_config(),
        }
    }

    pub fn sdld_config(&self) -> SdldConfig {
        SdldConfig {
            tree: self.tree_config(),
            fractions: self.fractions,
            lambda: self.lambda,
            bootstrap_samples: self.bootstrap_samples,
            level: self.level,
            seed: self.seed,
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            n_build: self.n_build,
            n_validate: self.n_validate,
            seed: self.seed,
            replicates: self.replicates,
            eval_size: self.eval_size,
            variant: self.variant,
            lambda: self.lambda,
        }
    }

    /// Range checks that do not need data.
    pub fn check(&self) -> Result<(), String> {
        self.sdld_config().check().map_err(|e| e.to_string())?;
        if self.replicates == 0 {
            return Err("replicates must be at least 1".into());
        }
        if self.eval_size < 2 {
            return Err("eval_size must be at least 2".into());
        }
        if self.n_build == 0 || self.n_validate == 0 {
            return Err("n_build and n_validate must be positive".into());
        }
        Ok(())
    }
}
