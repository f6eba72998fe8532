//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The engine is deliberately small: a tape ([`Graph`]) of eagerly evaluated
//! nodes, the handful of ops a volumetric U-Net needs, and an [`optim::Adam`]
//! optimizer. Everything is generic over [`Scalar`] so gradient checks can run
//! in `f64` while training runs in `f32`.

mod error;
mod graph;
mod kernels;
mod params;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod optim;

pub use error::{Result, TensorError};
pub use graph::{Graph, NodeId};
pub use params::{GraphBinding, Param, ParamId, ParameterSet};
pub use scalar::Scalar;
pub use tensor::Tensor;
