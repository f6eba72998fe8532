use thiserror::Error;

/// Errors raised while building or differentiating a graph.
#[derive(Debug, Error)]
pub enum TensorError {
    /// Operand shapes are incompatible with the requested op.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An op was configured with invalid hyperparameters.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The engine was driven in an unsupported order (e.g. reading gradients
    /// before `backward`).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
