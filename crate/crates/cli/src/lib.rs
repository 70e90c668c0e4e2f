//! Command-line front end for counterfactual classification: fitting,
//! prediction, evaluation, simulation experiments and data preparation.
//!
//! Every command is available as a function so that it can be driven from
//! tests; `main.rs` only parses arguments and maps errors to exit codes.

pub mod artifact;
pub mod commands;
pub mod compas;
pub mod config;
pub mod error;
pub mod output;
pub mod table;

pub use artifact::ModelArtifact;
pub use commands::{cmd_evaluate, cmd_fit, cmd_predict, cmd_simulate, EvaluateOptions, Evaluation, FitOutput};
pub use compas::cmd_preprocess_compas;
pub use config::RunConfig;
pub use error::CliError;
