//! Probability learners for binary targets, used to fit nuisance functions.
//!
//! Three kinds are available: logistic regression on the raw features,
//! logistic regression on a degree-2 expansion, and gradient-boosted trees
//! of bounded depth (depth 1 gives stumps). All predictions are conditional
//! probabilities in `[0, 1]`.

mod boosting;
mod logistic;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boosting::BoostedTrees;
pub use logistic::LogisticModel;
pub(crate) use logistic::{solve_spd, weighted_gram};

fn default_lambda() -> f64 {
    1e-3
}

fn default_rounds() -> usize {
    200
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_depth() -> usize {
    1
}

fn default_leaf_lambda() -> f64 {
    1.0
}

/// Learner kind and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Logistic regression with ridge penalty `lambda/2 * |theta|^2` on all
    /// coefficients including the intercept.
    LogisticLinear {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Logistic regression on `[x, x^2, pairwise products]`.
    LogisticQuadratic {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Newton-boosted regression trees on the log-loss.
    GradientBoostedStumps {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_depth")]
        max_depth: usize,
        /// L2 penalty on leaf values.
        #[serde(default = "default_leaf_lambda")]
        lambda: f64,
    },
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::LogisticQuadratic {
            lambda: default_lambda(),
        }
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::LogisticLinear { lambda } | LearnerSpec::LogisticQuadratic { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Argument(format!("regularization must be >= 0, got {lambda}")));
                }
            }
            LearnerSpec::GradientBoostedStumps {
                rounds,
                learning_rate,
                max_depth,
                lambda,
            } => {
                if rounds == 0 {
                    return Err(Error::Argument("boosting needs at least one round".into()));
                }
                if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    return Err(Error::Argument(format!(
                        "learning rate must lie in (0, 1], got {learning_rate}"
                    )));
                }
                if max_depth == 0 {
                    return Err(Error::Argument("max depth must be >= 1".into()));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Argument(format!("leaf regularization must be >= 0, got {lambda}")));
                }
            }
        }
        Ok(())
    }

    fn regularization(&self) -> f64 {
        match *self {
            LearnerSpec::LogisticLinear { lambda }
            | LearnerSpec::LogisticQuadratic { lambda }
            | LearnerSpec::GradientBoostedStumps { lambda, .. } => lambda,
        }
    }
}

/// A fitted probability model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedLearner {
    Logistic(LogisticModel),
    Boosted(BoostedTrees),
}

impl FittedLearner {
    /// Number of raw input features expected by [`predict`].
    pub fn dim(&self) -> usize {
        match self {
            FittedLearner::Logistic(m) => m.dim(),
            FittedLearner::Boosted(m) => m.dim(),
        }
    }
}

/// Fits `spec` to `(features, targets)`.
pub fn fit(spec: &LearnerSpec, features: &DMatrix<f64>, targets: &[u8]) -> Result<FittedLearner> {
    spec.validate()?;
    if features.nrows() != targets.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if targets.len() < 2 {
        return Err(Error::Argument("at least two training rows are required".into()));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::Argument("targets must be binary".into()));
    }
    let ones = targets.iter().filter(|&&t| t == 1).count();
    if (ones == 0 || ones == targets.len()) && spec.regularization() == 0.0 {
        return Err(Error::Separation(format!(
            "all {} targets equal {} and regularization is 0",
            targets.len(),
            targets[0]
        )));
    }
    match *spec {
        LearnerSpec::LogisticLinear { lambda } => {
            LogisticModel::fit(features, targets, false, lambda).map(FittedLearner::Logistic)
        }
        LearnerSpec::LogisticQuadratic { lambda } => {
            LogisticModel::fit(features, targets, true, lambda).map(FittedLearner::Logistic)
        }
        LearnerSpec::GradientBoostedStumps {
            rounds,
            learning_rate,
            max_depth,
            lambda,
        } => Ok(FittedLearner::Boosted(BoostedTrees::fit(
            features,
            targets,
            rounds,
            learning_rate,
            max_depth,
            lambda,
        ))),
    }
}

/// Predicted probabilities for each row of `features`.
pub fn predict(model: &FittedLearner, features: &DMatrix<f64>) -> Result<Vec<f64>> {
    if features.ncols() != model.dim() {
        return Err(Error::Argument(format!(
            "model expects {} features, got {}",
            model.dim(),
            features.ncols()
        )));
    }
    Ok(match model {
        FittedLearner::Logistic(m) => m.predict(features),
        FittedLearner::Boosted(m) => m.predict(features),
    })
}

/// Mean binary cross-entropy of `probs` against `targets`.
pub fn cross_entropy(probs: &[f64], targets: &[u8]) -> f64 {
    let eps = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}
