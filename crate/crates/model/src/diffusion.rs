//! Denoising-diffusion objective: forward noising and the noise target.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stratagen_autodiff::{Scalar, Tensor};

use crate::error::{ModelError, Result};
use crate::flow::PathBatch;
use crate::schedule::NoiseSchedule;

/// Forward-noised state: `sqrt(alpha_bar) * x_clean + sqrt(1 - alpha_bar) * eps`.
pub fn noised<T: Scalar>(x_clean: &Tensor<T>, eps: &Tensor<T>, alpha_bar: f64) -> Result<Tensor<T>> {
    if x_clean.shape() != eps.shape() {
        return Err(ModelError::Config("clean data and noise shapes disagree".into()));
    }
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(ModelError::Config(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    let a = T::from_f64(alpha_bar.sqrt());
    let b = T::from_f64((1.0 - alpha_bar).sqrt());
    let data = x_clean
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| a * x + b * e)
        .collect();
    Ok(Tensor::new(x_clean.shape(), data).expect("matching shape"))
}

/// Draw a diffusion batch for clean data `x1: [B, C, D, H, W]`.
///
/// Per sample, a step `t ~ U{1..T}` is drawn first, then the noise in data
/// order. The recorded time is the fraction `t / T` (the network's time
/// input), and the target is the injected noise itself.
pub fn ddpm_batch<T: Scalar>(
    x1: &Tensor<T>,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<PathBatch<T>> {
    let [b, ..] = x1.dims5()?;
    let total = schedule.steps();
    let steps: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=total)).collect();
    let eps_data: Vec<T> = (0..x1.numel())
        .map(|_| T::from_f64(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)))
        .collect();
    let eps = Tensor::new(x1.shape(), eps_data).expect("noise shape");
    let per = x1.numel() / b;
    let mut xt_data = Vec::with_capacity(x1.numel());
    for (s, &t) in steps.iter().enumerate() {
        let ab = schedule.alpha_bar(t);
        let a = T::from_f64(ab.sqrt());
        let c = T::from_f64((1.0 - ab).sqrt());
        for i in s * per..(s + 1) * per {
            xt_data.push(a * x1.data()[i] + c * eps.data()[i]);
        }
    }
    Ok(PathBatch {
        xt: Tensor::new(x1.shape(), xt_data).expect("path shape"),
        ts: steps.iter().map(|&t| t as f64 / total as f64).collect(),
        target: eps,
    })
}
