//! Training snapshots: everything needed to resume a run bit-for-bit —
//! parameters, optimizer moments, RNG position, and the loss history.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stratagen_autodiff::optim::{Adam, AdamConfig};

use crate::error::{ModelError, Result};
use crate::train::{LogLine, Objective, TrainState};
use crate::unet::{UNet, UNetConfig};

/// A tensor with its registry name and shape, 32-bit payload.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Complete training state at one step. Serialization to disk is the
/// pipeline layer's job; this struct is the exchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSnapshot {
    pub config: UNetConfig,
    pub objective: Objective,
    pub step: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub adam_step: u64,
    pub params: Vec<NamedTensor>,
    /// First/second moment buffers, in parameter order.
    pub adam_m: Vec<Vec<f32>>,
    pub adam_v: Vec<Vec<f32>>,
    pub history: Vec<LogLine>,
}

impl TrainState<f32> {
    pub fn snapshot(&self) -> TrainSnapshot {
        let params = self
            .params
            .iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect();
        let (m, v) = self.opt.moments();
        TrainSnapshot {
            config: self.net.config().clone(),
            objective: self.objective,
            step: self.step,
            rng_seed: self.rng.get_seed(),
            rng_word_pos: self.rng.get_word_pos(),
            adam_lr: self.opt.cfg.lr,
            adam_beta1: self.opt.cfg.beta1,
            adam_beta2: self.opt.cfg.beta2,
            adam_eps: self.opt.cfg.eps,
            adam_step: self.opt.step_count(),
            params: params,
            adam_m: m.to_vec(),
            adam_v: v.to_vec(),
            history: self.history.clone(),
        }
    }

    /// Rebuild a training state that continues exactly where the snapshot
    /// was taken: same parameters, optimizer moments, and RNG position.
    pub fn restore(snap: &TrainSnapshot) -> Result<TrainState<f32>> {
        // Rebuild the layout; the freshly drawn values are overwritten below.
        let mut scratch_rng = ChaCha8Rng::seed_from_u64(0);
        let (net, mut params) = UNet::init::<f32>(snap.config.clone(), &mut scratch_rng)?;
        if params.len() != snap.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "snapshot holds {} tensors, layout expects {}",
                snap.params.len(),
                params.len()
            )));
        }
        for nt in &snap.params {
            let id = params.id_of(&nt.name).ok_or_else(|| {
                ModelError::Checkpoint(format!("unknown parameter '{}'", nt.name))
            })?;
            let p = params.get_mut(id);
            if p.value.shape() != nt.shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter '{}' has shape {:?}, snapshot holds {:?}",
                    nt.name,
                    p.value.shape(),
                    nt.shape
                )));
            }
            p.value.data_mut().copy_from_slice(&nt.data);
        }

        let cfg = AdamConfig {
            lr: snap.adam_lr,
            beta1: snap.adam_beta1,
            beta2: snap.adam_beta2,
            eps: snap.adam_eps,
        };
        let mut opt = Adam::new(cfg, &params);
        opt.restore(snap.adam_step, snap.adam_m.clone(), snap.adam_v.clone())?;

        let mut rng = ChaCha8Rng::from_seed(snap.rng_seed);
        rng.set_word_pos(snap.rng_word_pos);

        Ok(TrainState::from_parts(
            net,
            params,
            opt,
            rng,
            snap.objective,
            snap.step,
            snap.history.clone(),
        ))
    }
}
