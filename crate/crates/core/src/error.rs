use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration (bad ranges, malformed planes, …).
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid or inconsistent data (labels out of range, missing inputs).
    #[error("data error: {0}")]
    Data(String),
    /// Geometric preconditions violated (e.g. receiver inside a voxel).
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Numerical failure (non-finite values where finite ones are required).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// API misuse (arguments outside the documented domain).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
