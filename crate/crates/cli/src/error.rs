//! CLI error type carrying the process exit code contract.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments → exit 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing or inconsistent data/files → exit 3.
    #[error("data error: {0}")]
    Data(String),
    /// Numerical failure (non-finite values, diverged training) → exit 4.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<stratagen_core::CoreError> for CliError {
    fn from(e: stratagen_core::CoreError) -> Self {
        use stratagen_core::CoreError as E;
        match e {
            E::Config(m) | E::Usage(m) => CliError::Config(m),
            E::Data(m) | E::Geometry(m) => CliError::Data(m),
            E::Numerical(m) => CliError::Numerical(m),
        }
    }
}

impl From<stratagen_model::ModelError> for CliError {
    fn from(e: stratagen_model::ModelError) -> Self {
        use stratagen_model::ModelError as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Training(m) | E::Sampling(m) => CliError::Numerical(m),
            E::Checkpoint(m) => CliError::Data(m),
            E::Tensor(t) => CliError::Config(t.to_string()),
            E::Core(c) => c.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
