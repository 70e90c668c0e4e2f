//! Estimation of constrained counterfactual classifiers from observational data.
//!
//! The pipeline fits cross-fitted nuisance functions (propensity score and
//! per-arm outcome regressions), turns observed outcomes into doubly-robust
//! pseudo-outcomes, minimizes the resulting cross-entropy risk over a
//! constrained parameter set and reports asymptotic confidence intervals
//! built from the bordered KKT system at the solution.
//!
//! ```no_run
//! use cfclass_core::{estimate, EstimationOptions, simulation::{generate_dgp, DgpConfig}};
//!
//! let sim = generate_dgp(&DgpConfig { n: 2000, seed: 7, ..Default::default() }).unwrap();
//! let fit = estimate(&sim.dataset, None, &EstimationOptions::default()).unwrap();
//! println!("{:?}", fit.solution.beta_hat);
//! ```

pub mod data;
pub mod error;
pub mod inference;
pub mod influence;
pub mod learners;
pub mod metrics;
pub mod nuisance;
pub mod optimizer;
pub mod pipeline;
pub mod risk;
pub mod simulation;
pub(crate) mod serde_nested;

pub use data::{split_folds, Dataset, FoldAssignment, Schema};
pub use error::{Error, Result};
pub use inference::{InferenceOptions, InferenceReport};
pub use influence::PseudoOutcomes;
pub use learners::{FittedLearner, LearnerSpec};
pub use nuisance::NuisanceFit;
pub use optimizer::{Program, Solution, SolveStatus, SolverOptions};
pub use pipeline::{estimate, Estimate, EstimationOptions, Method};
pub use risk::{BasisSpec, RiskEval};
