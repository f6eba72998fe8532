//! Pure array kernels: forward and backward passes as free functions over
//! slices, so the graph layer stays free of index arithmetic.

pub mod conv;
pub mod elementwise;
pub mod linear;
pub mod norm;
pub mod resample;
