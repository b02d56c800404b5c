use std::path::PathBuf;

use stlcbf_core::controller::ControllerError;
use stlcbf_core::hocbf::HocbfError;
use stlcbf_core::scenario::ConfigError;

/// Failures of the command-line tool. Each maps to a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit code.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 0 | success |
    /// | 1 | IO or other runtime failure |
    /// | 2 | invalid configuration or arguments |
    /// | 3 | infeasible scenario |
    /// | 4 | checkpoint unreadable or environment hash mismatch |
    /// | 5 | missing data files or columns |
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::MissingData(_) => 5,
            CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        use stlcbf_core::controller::RolloutError;
        match e {
            ControllerError::NoFeasibleSample(_) => CliError::Infeasible(e.to_string()),
            ControllerError::Rollout(RolloutError::Hocbf(h @ (HocbfError::InfeasibleSpec { .. } | HocbfError::EmptyBox { .. }))) => {
                CliError::Infeasible(h.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
