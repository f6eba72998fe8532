//! Error type shared by the model, objective, and sampler layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    /// Invalid architecture, schedule, or training configuration.
    #[error("config: {0}")]
    Config(String),
    /// Training-time failure (non-finite loss, bad batch).
    #[error("training: {0}")]
    Training(String),
    /// Sampling-time failure (non-finite state, bad inputs).
    #[error("sampling: {0}")]
    Sampling(String),
    /// Checkpoint contents inconsistent with the requested restore.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] stratagen_autodiff::TensorError),
    #[error(transparent)]
    Core(#[from] stratagen_core::CoreError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
