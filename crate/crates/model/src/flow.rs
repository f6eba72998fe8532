//! Flow-matching objective: linear interpolation path and target velocity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stratagen_autodiff::{Scalar, Tensor};

use crate::error::{ModelError, Result};

/// One training batch on the linear path: the interpolated state, the
/// per-sample times, and the regression target.
#[derive(Debug, Clone)]
pub struct PathBatch<T: Scalar> {
    /// `[B, C, D, H, W]` noisy state.
    pub xt: Tensor<T>,
    /// Per-sample time in `[0, 1]` (for diffusion: step fraction `t/T`).
    pub ts: Vec<f64>,
    /// Regression target: velocity `x1 - x0` or injected noise, `xt`-shaped.
    pub target: Tensor<T>,
}

/// Point on the linear path: `(1-t) * x0 + t * x1`.
///
/// Exact at the endpoints: `t = 0` returns `x0` bitwise, `t = 1` returns `x1`.
pub fn interpolate<T: Scalar>(x0: &Tensor<T>, x1: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
    if x0.shape() != x1.shape() {
        return Err(ModelError::Config(format!(
            "interpolation endpoints disagree: {:?} vs {:?}",
            x0.shape(),
            x1.shape()
        )));
    }
    let a = T::from_f64(1.0 - t);
    let b = T::from_f64(t);
    let data = x0
        .data()
        .iter()
        .zip(x1.data())
        .map(|(&p, &q)| a * p + b * q)
        .collect();
    Ok(Tensor::new(x0.shape(), data).expect("matching shape"))
}

/// Target velocity of the linear path, constant in `t`: `x1 - x0`.
pub fn velocity_target<T: Scalar>(x0: &Tensor<T>, x1: &Tensor<T>) -> Result<Tensor<T>> {
    if x0.shape() != x1.shape() {
        return Err(ModelError::Config("velocity endpoints disagree".into()));
    }
    let data = x0.data().iter().zip(x1.data()).map(|(&p, &q)| q - p).collect();
    Ok(Tensor::new(x0.shape(), data).expect("matching shape"))
}

/// Draw a flow-matching batch for clean data `x1: [B, C, D, H, W]`.
///
/// Draw order is fixed: one `t ~ U(0, 1)` per sample first, then the standard
/// normal `x0` in data order, so a seeded generator reproduces the batch.
pub fn flow_batch<T: Scalar>(x1: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<PathBatch<T>> {
    let [b, ..] = x1.dims5()?;
    let ts: Vec<f64> = (0..b).map(|_| rng.gen_range(0.0..1.0)).collect();
    let x0_data: Vec<T> = (0..x1.numel())
        .map(|_| T::from_f64(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)))
        .collect();
    let x0 = Tensor::new(x1.shape(), x0_data).expect("noise shape");
    let per = x1.numel() / b;
    let mut xt_data = Vec::with_capacity(x1.numel());
    for (s, &t) in ts.iter().enumerate() {
        let a = T::from_f64(1.0 - t);
        let c = T::from_f64(t);
        for i in s * per..(s + 1) * per {
            xt_data.push(a * x0.data()[i] + c * x1.data()[i]);
        }
    }
    let xt = Tensor::new(x1.shape(), xt_data).expect("path shape");
    let target = velocity_target(&x0, x1)?;
    Ok(PathBatch { xt, ts, target })
}
