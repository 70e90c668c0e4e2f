//! End-to-end estimation: folds, nuisances, pseudo-outcomes, the
//! constrained risk minimization and inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{split_folds, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::inference::{infer, InferenceOptions, InferenceReport};
use crate::influence::pseudo_outcomes;
use crate::learners::LearnerSpec;
use crate::nuisance::{fit_nuisances, NuisanceFit, DEFAULT_EPSILON};
use crate::optimizer::{solve, LinearConstraint, NormBall, Program, Solution, SolverOptions};
use crate::risk::{expand_basis, sigmoid, BasisSpec, RiskObjective};

/// Which risk estimate is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cross-entropy against the doubly-robust pseudo-outcomes.
    DoublyRobust,
    /// Cross-entropy against the outcome-regression predictions.
    PlugIn,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::DoublyRobust => "doubly-robust",
            Method::PlugIn => "plug-in",
        }
    }
}

fn default_box() -> Option<f64> {
    Some(1.0)
}

/// Declarative constraint set over the score coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// `|beta_j| <= bound` for all j. Ignored when `lower`/`upper` are set.
    #[serde(default = "default_box")]
    pub box_bound: Option<f64>,
    /// Per-coordinate bounds; must have length k when given.
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    /// `|beta|_2 <= radius`.
    #[serde(default)]
    pub norm_ball: Option<f64>,
    #[serde(default)]
    pub linear: Vec<LinearConstraint>,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            box_bound: default_box(),
            lower: None,
            upper: None,
            norm_ball: None,
            linear: Vec::new(),
        }
    }
}

impl ConstraintSpec {
    pub fn unconstrained() -> Self {
        Self {
            box_bound: None,
            ..Self::default()
        }
    }

    pub fn symmetric_box(bound: f64) -> Self {
        Self {
            box_bound: Some(bound),
            ..Self::default()
        }
    }

    /// Builds the program for `k` coefficients.
    pub fn program(&self, k: usize) -> Result<Program> {
        let mut p = Program::new(k);
        if self.lower.is_some() || self.upper.is_some() {
            let lower = self.lower.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; k]);
            let upper = self.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; k]);
            if lower.len() != k || upper.len() != k {
                return Err(Error::Argument(format!(
                    "box bounds have lengths {}/{} but the basis has {k} columns",
                    lower.len(),
                    upper.len()
                )));
            }
            p = p.with_box(lower, upper)?;
        } else if let Some(b) = self.box_bound {
            if !(b > 0.0) {
                return Err(Error::Argument(format!("box bound must be positive, got {b}")));
            }
            p = p.with_symmetric_box(b);
        }
        if let Some(r) = self.norm_ball {
            if !(r > 0.0) {
                return Err(Error::Argument(format!("norm-ball radius must be positive, got {r}")));
            }
            p = p.with_constraint(NormBall { radius: r, center: None });
        }
        for c in &self.linear {
            if c.coefficients.len() != k {
                return Err(Error::Argument(format!(
                    "linear constraint has {} coefficients but the basis has {k} columns",
                    c.coefficients.len()
                )));
            }
            p = p.with_constraint(c.clone());
        }
        Ok(p)
    }
}

fn default_target() -> u8 {
    1
}
fn default_folds() -> usize {
    2
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_propensity() -> LearnerSpec {
    LearnerSpec::LogisticLinear { lambda: 1e-3 }
}
fn default_method() -> Method {
    Method::DoublyRobust
}

/// Everything that determines an estimate besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationOptions {
    #[serde(default = "default_method")]
    pub method: Method,
    /// Intervention level whose counterfactual outcome is classified.
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

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            method: default_method(),
            target_a: default_target(),
            folds: default_folds(),
            seed: 0,
            epsilon: default_epsilon(),
            propensity: default_propensity(),
            outcome: LearnerSpec::default(),
            basis: BasisSpec::default(),
            constraints: ConstraintSpec::default(),
            solver: SolverOptions::default(),
            inference: InferenceOptions::default(),
        }
    }
}

/// A fitted counterfactual classifier with its intermediate products.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub method: Method,
    pub folds: FoldAssignment,
    pub nuisance: NuisanceFit,
    /// Pseudo-outcomes (doubly-robust) or regression predictions (plug-in).
    pub targets: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub program: Program,
    pub solution: Solution,
    /// Present when the solver converged and the KKT system is regular.
    pub inference: Option<InferenceReport>,
    pub inference_error: Option<String>,
}

impl Estimate {
    /// Scores `s(beta_hat' b(v_i))` on the training rows.
    pub fn training_scores(&self) -> Vec<f64> {
        scores(&self.basis, &self.solution.beta_hat)
    }
}

pub fn scores(basis: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (basis * beta).iter().map(|&u| sigmoid(u)).collect()
}

/// Draws folds and fits the nuisance functions.
pub fn fit_nuisance_stage(
    data: &Dataset,
    outcome_covariates: Option<&DMatrix<f64>>,
    options: &EstimationOptions,
) -> Result<(FoldAssignment, NuisanceFit)> {
    let folds = split_folds(data.n(), options.folds, options.seed)?;
    let fit = fit_nuisances(
        data,
        &folds,
        &options.propensity,
        &options.outcome,
        options.epsilon,
        options.target_a,
        outcome_covariates,
    )?;
    Ok((folds, fit))
}

/// Risk targets for `method` from fitted nuisances.
pub fn risk_targets(method: Method, data: &Dataset, nuisance: &NuisanceFit) -> Result<Vec<f64>> {
    match method {
        Method::DoublyRobust => Ok(pseudo_outcomes(data, nuisance)?.values().to_vec()),
        Method::PlugIn => Ok(nuisance.mu_values(nuisance.target_a()).to_vec()),
    }
}

/// Minimizes the risk for the given targets over the configured program.
pub fn solve_risk(basis: &DMatrix<f64>, targets: &[f64], program: &Program, solver: &SolverOptions) -> Result<Solution> {
    let objective = RiskObjective::new(basis, targets)?;
    solve(program, &objective, solver)
}

/// Runs the whole pipeline. `outcome_covariates` optionally replaces the
/// confounders as inputs to the outcome regressions.
pub fn estimate(data: &Dataset, outcome_covariates: Option<&DMatrix<f64>>, options: &EstimationOptions) -> Result<Estimate> {
    let (folds, nuisance) = fit_nuisance_stage(data, outcome_covariates, options)?;
    estimate_with_nuisance(data, folds, nuisance, options.method, options)
}

/// The pipeline after the nuisance stage, so that several methods can share
/// one nuisance fit.
pub fn estimate_with_nuisance(
    data: &Dataset,
    folds: FoldAssignment,
    nuisance: NuisanceFit,
    method: Method,
    options: &EstimationOptions,
) -> Result<Estimate> {
    let targets = risk_targets(method, data, &nuisance)?;
    let basis = expand_basis(&options.basis, data)?;
    let program = options.constraints.program(basis.ncols())?;
    let solution = solve_risk(&basis, &targets, &program, &options.solver)?;
    let (inference, inference_error) = if solution.converged() {
        match infer(&solution, &program, &targets, &basis, &options.inference) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("solver did not converge".into()))
    };
    Ok(Estimate {
        method,
        folds,
        nuisance,
        targets,
        basis,
        program,
        solution,
        inference,
        inference_error,
    })
}
