//! Simulated data, oracle ground truth and replicated experiments.

pub mod dgp;
pub mod experiment;
pub mod oracle;

pub use dgp::{distort_covariates, generate_covariates, generate_dgp, propensity, true_regression, DgpConfig, SimulatedData};
pub use experiment::{loglog_slope, run_dr_experiment, ExperimentConfig, ExperimentResult, ReplicationRecord, SummaryRow, XMode};
pub use oracle::{oracle_beta_star, Oracle};
