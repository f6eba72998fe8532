//! Conditioned samplers: Euler ODE integration for the flow model and
//! ancestral denoising for the diffusion model, with hard constraint
//! projection after every step.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stratagen_autodiff::{Graph, ParameterSet, Scalar, Tensor};
use stratagen_core::volume::UNSAMPLED;
use stratagen_core::{CategoricalVolume, ConditionVolume, ContinuousVolume, GridDims};

use crate::error::{ModelError, Result};
use crate::schedule::NoiseSchedule;
use crate::unet::UNet;

/// View a continuous volume as a single-sample `[1, C, X, Y, Z]` tensor.
/// Both sides store channel-major, x-fastest-last data, so this is a copy
/// without reordering.
pub fn volume_to_tensor<T: Scalar>(cv: &ContinuousVolume) -> Tensor<T> {
    let d = cv.dims;
    let data = cv.data.iter().map(|&v| T::from_f64(v as f64)).collect();
    Tensor::new(&[1, cv.channels, d.nx, d.ny, d.nz], data).expect("volume shape")
}

/// Inverse of [`volume_to_tensor`] for a `[1, C, X, Y, Z]` tensor.
pub fn tensor_to_volume<T: Scalar>(t: &Tensor<T>, dims: GridDims) -> Result<ContinuousVolume> {
    let [b, c, nx, ny, nz] = t.dims5()?;
    if b != 1 || (nx, ny, nz) != (dims.nx, dims.ny, dims.nz) {
        return Err(ModelError::Config(format!(
            "tensor {b}x{c}x{nx}x{ny}x{nz} does not view a {}x{}x{} volume",
            dims.nx, dims.ny, dims.nz
        )));
    }
    let data = t.data().iter().map(|&v| v.to_f64() as f32).collect();
    Ok(ContinuousVolume::from_data(dims, c, data)?)
}

/// Position along the generative path, for constraint projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathPoint {
    /// Flow time in `[0, 1]`; 1 is clean data.
    Flow { t: f64 },
    /// Diffusion signal fraction in `[0, 1]`; 1 is clean data.
    Ddpm { alpha_bar: f64 },
}

/// Hard conditioning: observed voxels are pinned to their exact on-path
/// value after every sampler step, so the final state reproduces the
/// observations by construction rather than by learning.
pub struct HardCondition<T: Scalar> {
    dims: GridDims,
    channels: usize,
    /// `(flat voxel index, category label)` for every observed voxel.
    labeled: Vec<(usize, u8)>,
    /// Noise sample frozen for the whole run; the projection interpolates
    /// between this and the embedded label.
    frozen: Tensor<T>,
}

impl<T: Scalar> HardCondition<T> {
    /// `frozen` must be `[1, K, X, Y, Z]` matching the conditioning grid.
    pub fn new(cond: &ConditionVolume, frozen: Tensor<T>) -> Result<Self> {
        let [b, k, nx, ny, nz] = frozen.dims5()?;
        let d = cond.dims;
        if b != 1 || k != stratagen_core::facies::K || (nx, ny, nz) != (d.nx, d.ny, d.nz) {
            return Err(ModelError::Config(
                "frozen noise shape does not match the conditioning grid".into(),
            ));
        }
        cond.validate()?;
        let mut labeled = Vec::with_capacity(cond.labeled_count());
        for (i, &l) in cond.labels.iter().enumerate() {
            if l != UNSAMPLED {
                labeled.push((i, l as u8));
            }
        }
        Ok(Self { dims: d, channels: k, labeled, frozen })
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.len()
    }

    /// Overwrite every observed voxel of `x` with its exact on-path value.
    ///
    /// Flow path: `(1 - t) * frozen + t * embed(label)`.
    /// Diffusion path: `sqrt(ab) * embed(label) + sqrt(1 - ab) * frozen`.
    /// At `t = 1` / `alpha_bar = 1` the value is exactly the signed one-hot
    /// embedding, so decoding recovers the observed label.
    pub fn project(&self, x: &mut Tensor<T>, point: PathPoint) -> Result<()> {
        if x.shape() != self.frozen.shape() {
            return Err(ModelError::Sampling("state shape drifted from the grid".into()));
        }
        let count = self.dims.count();
        let (sig, noi) = match point {
            PathPoint::Flow { t } => (t, 1.0 - t),
            PathPoint::Ddpm { alpha_bar } => (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt()),
        };
        let sig = T::from_f64(sig);
        let noi = T::from_f64(noi);
        let one = T::one();
        let neg = -T::one();
        let data = x.data_mut();
        for &(vidx, label) in &self.labeled {
            for c in 0..self.channels {
                let e = if c == (label - 1) as usize { one } else { neg };
                let n = self.frozen.data()[c * count + vidx];
                data[c * count + vidx] = sig * e + noi * n;
            }
        }
        Ok(())
    }
}

/// Velocity field of the flow model. Inputs are the single-sample state
/// `[1, K, X, Y, Z]`, the flow time, and the conditioning channels
/// `[1, K+1, X, Y, Z]`.
pub trait VelocityModel<T: Scalar> {
    fn velocity(&self, x: &Tensor<T>, t: f64, cond: &Tensor<T>) -> Result<Tensor<T>>;
}

/// Noise predictor of the diffusion model; `t_frac` is the step fraction
/// `t / T` in `(0, 1]`.
pub trait NoiseModel<T: Scalar> {
    fn epsilon(&self, x: &Tensor<T>, t_frac: f64, cond: &Tensor<T>) -> Result<Tensor<T>>;
}

/// A trained network viewed as a field: runs one forward pass per query.
pub struct NetModel<'a, T: Scalar> {
    pub net: &'a UNet,
    pub params: &'a ParameterSet<T>,
}

impl<'a, T: Scalar> NetModel<'a, T> {
    fn eval(&self, x: &Tensor<T>, t: f64, cond: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g);
        let xn = g.leaf(x.clone());
        let cn = g.leaf(cond.clone());
        let out = self.net.forward(&mut g, &bind, xn, cn, &[t])?;
        Ok(g.value(out).clone())
    }
}

impl<'a, T: Scalar> VelocityModel<T> for NetModel<'a, T> {
    fn velocity(&self, x: &Tensor<T>, t: f64, cond: &Tensor<T>) -> Result<Tensor<T>> {
        self.eval(x, t, cond)
    }
}

impl<'a, T: Scalar> NoiseModel<T> for NetModel<'a, T> {
    fn epsilon(&self, x: &Tensor<T>, t_frac: f64, cond: &Tensor<T>) -> Result<Tensor<T>> {
        self.eval(x, t_frac, cond)
    }
}

/// Test stub: identically zero velocity / noise estimate.
pub struct ZeroField;

impl<T: Scalar> VelocityModel<T> for ZeroField {
    fn velocity(&self, x: &Tensor<T>, _t: f64, _cond: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Tensor::zeros(x.shape()))
    }
}

impl<T: Scalar> NoiseModel<T> for ZeroField {
    fn epsilon(&self, x: &Tensor<T>, _t: f64, _cond: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Tensor::zeros(x.shape()))
    }
}

/// Test stub: constant velocity `k` everywhere.
pub struct ConstantField(pub f64);

impl<T: Scalar> VelocityModel<T> for ConstantField {
    fn velocity(&self, x: &Tensor<T>, _t: f64, _cond: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Tensor::full(x.shape(), T::from_f64(self.0)))
    }
}

fn normal_tensor<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)))
        .collect();
    Tensor::new(shape, data).expect("noise shape")
}

fn check_finite<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<()> {
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Sampling(format!("non-finite {what}")));
    }
    Ok(())
}

fn state_shape(dims: GridDims) -> [usize; 5] {
    [1, stratagen_core::facies::K, dims.nx, dims.ny, dims.nz]
}

/// Integrate the flow ODE with `steps` forward-Euler steps from seeded
/// standard-normal noise, projecting the conditioned voxels after every step.
/// Returns the final continuous state at `t = 1`. The initial draw doubles as
/// the frozen projection noise, so the state satisfies the constraint at
/// `t = 0` as well.
pub fn integrate_ode<T: Scalar>(
    model: &dyn VelocityModel<T>,
    cond: &ConditionVolume,
    steps: usize,
    seed: u64,
) -> Result<Tensor<T>> {
    if steps == 0 {
        return Err(ModelError::Sampling("need at least one integration step".into()));
    }
    let dims = cond.dims;
    let cond_t: Tensor<T> = volume_to_tensor(&stratagen_core::sparsity::condition_channels(cond));
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let mut x = normal_tensor::<T>(&state_shape(dims), &mut rng);
    let hc = HardCondition::new(cond, x.clone())?;
    hc.project(&mut x, PathPoint::Flow { t: 0.0 })?;
    let dt = T::from_f64(1.0 / steps as f64);
    for k in 0..steps {
        let t = k as f64 / steps as f64;
        let v = model.velocity(&x, t, &cond_t)?;
        if v.shape() != x.shape() {
            return Err(ModelError::Sampling(format!(
                "velocity shape {:?} does not match state {:?}",
                v.shape(),
                x.shape()
            )));
        }
        for (xi, &vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi = *xi + dt * vi;
        }
        let t_next = (k + 1) as f64 / steps as f64;
        hc.project(&mut x, PathPoint::Flow { t: t_next })?;
        check_finite(&x, "state during ODE integration")?;
    }
    Ok(x)
}

/// [`integrate_ode`] followed by categorical decoding.
pub fn sample_ode<T: Scalar>(
    model: &dyn VelocityModel<T>,
    cond: &ConditionVolume,
    steps: usize,
    seed: u64,
) -> Result<CategoricalVolume> {
    let x = integrate_ode(model, cond, steps, seed)?;
    decode_state(&x, cond.dims)
}

/// Ancestral denoising from step `T` down to `1`, projecting the conditioned
/// voxels after every update at the signal level of the *next* (less noisy)
/// step. Returns the final continuous state; the last projection happens at
/// `alpha_bar(0) = 1`, pinning observed voxels to their exact embeddings.
pub fn denoise_chain<T: Scalar>(
    model: &dyn NoiseModel<T>,
    cond: &ConditionVolume,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Tensor<T>> {
    let dims = cond.dims;
    let total = schedule.steps();
    let cond_t: Tensor<T> = volume_to_tensor(&stratagen_core::sparsity::condition_channels(cond));
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let mut x = normal_tensor::<T>(&state_shape(dims), &mut rng);
    let hc = HardCondition::new(cond, x.clone())?;
    hc.project(&mut x, PathPoint::Ddpm { alpha_bar: schedule.alpha_bar(total) })?;
    for t in (1..=total).rev() {
        let eps_hat = model.epsilon(&x, t as f64 / total as f64, &cond_t)?;
        if eps_hat.shape() != x.shape() {
            return Err(ModelError::Sampling("noise estimate shape mismatch".into()));
        }
        let beta = schedule.beta(t);
        let alpha = 1.0 - beta;
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(t - 1);
        let c_x = T::from_f64(1.0 / alpha.sqrt());
        let c_e = T::from_f64(beta / ((1.0 - ab_t).sqrt() * alpha.sqrt()));
        for (xi, &ei) in x.data_mut().iter_mut().zip(eps_hat.data()) {
            *xi = c_x * *xi - c_e * ei;
        }
        if t > 1 {
            // Posterior standard deviation of the reverse kernel.
            let sigma = T::from_f64((beta * (1.0 - ab_prev) / (1.0 - ab_t)).sqrt());
            let z = normal_tensor::<T>(x.shape(), &mut rng);
            for (xi, &zi) in x.data_mut().iter_mut().zip(z.data()) {
                *xi = *xi + sigma * zi;
            }
        }
        hc.project(&mut x, PathPoint::Ddpm { alpha_bar: ab_prev })?;
        check_finite(&x, "state during denoising")?;
    }
    Ok(x)
}

/// [`denoise_chain`] followed by categorical decoding.
pub fn sample_ancestral<T: Scalar>(
    model: &dyn NoiseModel<T>,
    cond: &ConditionVolume,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<CategoricalVolume> {
    let x = denoise_chain(model, cond, schedule, seed)?;
    decode_state(&x, cond.dims)
}

fn decode_state<T: Scalar>(x: &Tensor<T>, dims: GridDims) -> Result<CategoricalVolume> {
    let cv = tensor_to_volume(x, dims)?;
    Ok(stratagen_core::sparsity::decode(&cv)?)
}
