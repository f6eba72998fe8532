//! Conditional generative models over categorical volumes: an
//! attention-gated 3D U-Net trained with either a flow-matching or a
//! denoising-diffusion objective, plus the matching conditioned samplers.

mod error;

pub mod checkpoint;
pub mod diffusion;
pub mod flow;
pub mod sampler;
pub mod schedule;
pub mod train;
pub mod unet;

pub use error::{ModelError, Result};
pub use sampler::{
    sample_ancestral, sample_ode, HardCondition, NetModel, NoiseModel, PathPoint, VelocityModel,
};
pub use schedule::NoiseSchedule;
pub use train::{Objective, TrainCase, TrainConfig, TrainState};
pub use unet::{UNet, UNetConfig};
