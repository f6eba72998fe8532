//! Adam optimizer and gradient clipping.

use crate::error::{Result, TensorError};
use crate::params::ParameterSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state: per-parameter first/second moment buffers plus a step counter.
pub struct Adam<T> {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParameterSet<T>) -> Self {
        let m = params.iter().map(|(_, p)| vec![T::zero(); p.value.numel()]).collect();
        let v = params.iter().map(|(_, p)| vec![T::zero(); p.value.numel()]).collect();
        Self { cfg, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameters. Gradients are left untouched; the
    /// caller zeroes them between steps.
    pub fn step(&mut self, params: &mut ParameterSet<T>) -> Result<()> {
        if !params.grads_ready() {
            return Err(TensorError::Usage(
                "optimizer step without populated gradients".into(),
            ));
        }
        if self.m.len() != params.len() {
            return Err(TensorError::Usage(format!(
                "optimizer tracks {} parameters, set has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);
        let b1t = T::from_f64(b1);
        let b2t = T::from_f64(b2);
        let one_m_b1 = T::from_f64(1.0 - b1);
        let one_m_b2 = T::from_f64(1.0 - b2);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            debug_assert_eq!(m.len(), p.value.numel());
            let vals = p.value.data_mut();
            for j in 0..vals.len() {
                let g = p.grad[j];
                m[j] = b1t * m[j] + one_m_b1 * g;
                v[j] = b2t * v[j] + one_m_b2 * g * g;
                let mhat = m[j] * inv_bc1;
                let vhat = v[j] * inv_bc2;
                vals[j] = vals[j] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers, for checkpointing. Order matches the parameter set.
    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Restore from checkpointed state.
    pub fn restore(&mut self, step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::Usage("moment buffer count mismatch".into()));
        }
        for (a, b) in m.iter().zip(&self.m) {
            if a.len() != b.len() {
                return Err(TensorError::Shape("moment buffer shape mismatch".into()));
            }
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(params: &mut ParameterSet<T>, max_norm: f64) -> f64 {
    let mut ss = 0.0f64;
    for (_, p) in params.iter() {
        for &g in &p.grad {
            let gf = g.to_f64();
            ss += gf * gf;
        }
    }
    let norm = ss.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::from_f64(max_norm / norm);
        for (_, p) in params.iter_mut() {
            for g in &mut p.grad {
                *g = *g * scale;
            }
        }
    }
    norm
}
