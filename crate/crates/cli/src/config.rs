//! Run configuration documents (TOML). The accepted keys are documented in
//! `docs/config.md`; unknown keys are rejected.

use std::path::Path;

use cfclass_core::inference::InferenceOptions;
use cfclass_core::pipeline::ConstraintSpec;
use cfclass_core::simulation::ExperimentConfig;
use cfclass_core::{BasisSpec, EstimationOptions, LearnerSpec, Method, Schema, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_target() -> u8 {
    EstimationOptions::default().target_a
}
fn default_folds() -> usize {
    EstimationOptions::default().folds
}
fn default_epsilon() -> f64 {
    EstimationOptions::default().epsilon
}
fn default_propensity() -> LearnerSpec {
    EstimationOptions::default().propensity
}
fn default_method() -> Method {
    Method::DoublyRobust
}

/// Configuration for `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schema: Schema,
    /// Prediction covariates; all confounders when omitted.
    #[serde(default)]
    pub v_columns: Option<Vec<String>>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_target")]
    pub target_a: u8,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_propensity")]
    pub propensity: LearnerSpec,
    #[serde(default)]
    pub outcome: LearnerSpec,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub inference: InferenceOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range checks that do not need the data. A fold count below 2 is
    /// left to the fit itself, which reports it as a degenerate split.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.target_a > 1 {
            return bad(format!("target_a must be 0 or 1, got {}", self.target_a));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon));
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return bad(format!("inference level must lie in (0, 1), got {}", self.inference.level));
        }
        if let Some(v) = &self.v_columns {
            if v.is_empty() {
                return bad("v_columns must not be empty".into());
            }
        }
        self.propensity.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.outcome.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn estimation_options(&self) -> EstimationOptions {
        EstimationOptions {
            method: self.method,
            target_a: self.target_a,
            folds: self.folds,
            seed: self.seed,
            epsilon: self.epsilon,
            propensity: self.propensity.clone(),
            outcome: self.outcome.clone(),
            basis: self.basis.clone(),
            constraints: self.constraints.clone(),
            solver: self.solver.clone(),
            inference: self.inference.clone(),
        }
    }
}

/// Configuration for `simulate`: the experiment grid plus the oracle sample.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    experiment_from_toml(&text)
}

pub fn experiment_from_toml(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}
