//! Geological scene generation and evaluation.
//!
//! This crate owns everything outside the neural model: procedural
//! categorical volumes built from kinematic event sequences ([`geostory`]),
//! sparse borehole/surface conditioning and the categorical ↔ continuous
//! embedding ([`sparsity`]), analytic prism gravity/magnetics ([`geophys`]),
//! and deterministic baselines plus the metric suite ([`evalbase`]).

mod error;

pub mod evalbase;
pub mod facies;
pub mod geophys;
pub mod geostory;
pub mod sparsity;
pub mod volume;

pub use error::{CoreError, Result};
pub use volume::{CategoricalVolume, ConditionVolume, ContinuousVolume, GridDims};
