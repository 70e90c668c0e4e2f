//! Self-describing model files written by `fit` and read by `predict` and
//! `evaluate`.

use std::path::Path;

use cfclass_core::learners::LearnerSpec;
use cfclass_core::optimizer::ConstraintId;
use cfclass_core::pipeline::ConstraintSpec;
use cfclass_core::risk::{expand_matrix, sigmoid, BasisKind};
use cfclass_core::{BasisSpec, Method, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multiplier {
    pub constraint: ConstraintId,
    pub gamma: f64,
}

/// How the model was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    pub n: usize,
    pub folds: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub propensity: LearnerSpec,
    pub outcome: LearnerSpec,
    pub constraints: ConstraintSpec,
    pub solver: SolverOptions,
    pub status: SolveStatus,
    pub risk_value: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub active_constraints: Vec<Multiplier>,
    /// Why no inference report was written, if none was.
    pub inference_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub method: Method,
    pub target_a: u8,
    pub v_columns: Vec<String>,
    pub basis: BasisSpec,
    pub basis_columns: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub fit: FitMetadata,
    /// File name of the inference report, relative to this artifact.
    pub inference_report: Option<String>,
}

impl ModelArtifact {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
        let art: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("invalid model file {}: {e}", path.display())))?;
        if art.format_version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                art.format_version
            )));
        }
        if let BasisKind::Custom(terms) = &art.basis.kind {
            if terms.iter().flatten().any(|&j| j >= art.v_columns.len()) {
                return Err(CliError::Data("model basis references a missing prediction column".into()));
            }
        }
        if art.beta_hat.len() != art.basis.k_prime(art.v_columns.len()) {
            return Err(CliError::Data("model coefficients do not match its basis".into()));
        }
        Ok(art)
    }

    /// `s(beta_hat' b(v))` for each row of `v` (columns ordered as `v_columns`).
    pub fn scores(&self, v: &DMatrix<f64>) -> Vec<f64> {
        let b = expand_matrix(&self.basis.kind, self.basis.include_intercept, v);
        let beta = DVector::from_column_slice(&self.beta_hat);
        (b * beta).iter().map(|&u| sigmoid(u)).collect()
    }
}
