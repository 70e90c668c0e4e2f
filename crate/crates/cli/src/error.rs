use std::fmt;

use cfclass_core::Error as CoreError;

/// A command failure with its process exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit 2).
    Config(String),
    /// Missing columns, unparsable rows, unreadable input data (exit 3).
    Data(String),
    /// A cross-fitting fold cannot support the nuisance fits (exit 4).
    DegenerateFolds(String),
    /// The solver did not reach the KKT tolerance (exit 5).
    NonConverged(String),
    /// Failure writing outputs (exit 1).
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::DegenerateFolds(_) => 4,
            CliError::NonConverged(_) => 5,
        }
    }

    /// Classifies a library error raised while processing input data.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Argument(m) => CliError::Config(m),
            CoreError::DegenerateFold { .. } | CoreError::Separation(_) => CliError::DegenerateFolds(e.to_string()),
            CoreError::NonConverged(m) => CliError::NonConverged(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Config(m) => ("configuration error", m),
            CliError::Data(m) => ("data error", m),
            CliError::DegenerateFolds(m) => ("degenerate folds", m),
            CliError::NonConverged(m) => ("solver did not converge", m),
            CliError::Output(m) => ("output error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}
