//! Training loop: batched objective steps, validation with frozen noise,
//! and per-step loss logging.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stratagen_autodiff::optim::{clip_global_norm, Adam, AdamConfig};
use stratagen_autodiff::{Graph, ParameterSet, Scalar, Tensor};
use stratagen_core::{CategoricalVolume, ConditionVolume};

use crate::diffusion::ddpm_batch;
use crate::error::{ModelError, Result};
use crate::flow::{flow_batch, PathBatch};
use crate::sampler::volume_to_tensor;
use crate::schedule::NoiseSchedule;
use crate::unet::{UNet, UNetConfig};

/// Which regression target the network is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Predict the path velocity `x1 - x0`.
    FlowMatching,
    /// Predict the injected noise.
    Ddpm,
}

/// One training case: embedded clean volume and its conditioning channels,
/// both stored as single-sample tensors.
#[derive(Debug, Clone)]
pub struct TrainCase<T: Scalar> {
    /// `[1, K, X, Y, Z]` signed one-hot embedding of the true volume.
    pub clean: Tensor<T>,
    /// `[1, K+1, X, Y, Z]` conditioning channels.
    pub cond: Tensor<T>,
}

impl<T: Scalar> TrainCase<T> {
    pub fn from_volumes(truth: &CategoricalVolume, cond: &ConditionVolume) -> Result<Self> {
        if truth.dims != cond.dims {
            return Err(ModelError::Config("truth and conditioning grids disagree".into()));
        }
        let clean = volume_to_tensor(&stratagen_core::sparsity::embed(truth)?);
        let cond = volume_to_tensor(&stratagen_core::sparsity::condition_channels(cond));
        Ok(Self { clean, cond })
    }
}

/// Stack single-sample case tensors into one batch tensor.
fn stack<T: Scalar>(tensors: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let [_, c, d, h, w] = tensors[0].dims5()?;
    let mut data = Vec::with_capacity(tensors.len() * tensors[0].numel());
    for t in tensors {
        if t.shape() != tensors[0].shape() {
            return Err(ModelError::Training("batch mixes tensor shapes".into()));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new(&[tensors.len(), c, d, h, w], data).expect("stacked shape"))
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Variance schedule for the diffusion objective (ignored by flow matching).
    pub schedule: NoiseSchedule,
}

impl TrainConfig {
    pub fn desk_default(objective: Objective) -> Self {
        Self {
            objective,
            epochs: 30,
            batch_size: 4,
            lr: 2e-4,
            clip_norm: Some(1.0),
            schedule: NoiseSchedule::desk_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(ModelError::Config("clip norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One recorded optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLine {
    pub step: u64,
    /// Seconds since training began (informational; excluded from
    /// reproducibility comparisons).
    pub wall_secs: f64,
    pub loss: f64,
}

/// Mutable state of a training run: network, parameters, optimizer, RNG.
pub struct TrainState<T: Scalar> {
    pub net: UNet,
    pub params: ParameterSet<T>,
    pub opt: Adam<T>,
    pub rng: ChaCha8Rng,
    pub objective: Objective,
    pub step: u64,
    pub history: Vec<LogLine>,
    started: Instant,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: UNetConfig, objective: Objective, seed: u64, lr: f64) -> Result<Self> {
        let mut rng = rand::SeedableRng::seed_from_u64(seed);
        let (net, params) = UNet::init(cfg, &mut rng)?;
        let opt = Adam::new(AdamConfig::with_lr(lr), &params);
        Ok(Self {
            net,
            params,
            opt,
            rng,
            objective,
            step: 0,
            history: Vec::new(),
            started: Instant::now(),
        })
    }

    pub(crate) fn from_parts(
        net: UNet,
        params: ParameterSet<T>,
        opt: Adam<T>,
        rng: ChaCha8Rng,
        objective: Objective,
        step: u64,
        history: Vec<LogLine>,
    ) -> Self {
        Self { net, params, opt, rng, objective, step, history, started: Instant::now() }
    }

    /// One optimizer update on a batch of cases. Returns the batch loss.
    pub fn train_step(&mut self, tcfg: &TrainConfig, batch: &[&TrainCase<T>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(ModelError::Training("empty batch".into()));
        }
        let clean = stack(&batch.iter().map(|c| &c.clean).collect::<Vec<_>>())?;
        let cond = stack(&batch.iter().map(|c| &c.cond).collect::<Vec<_>>())?;
        let path: PathBatch<T> = match self.objective {
            Objective::FlowMatching => flow_batch(&clean, &mut self.rng)?,
            Objective::Ddpm => ddpm_batch(&clean, &tcfg.schedule, &mut self.rng)?,
        };

        let mut g = Graph::new();
        let bind = self.params.bind(&mut g);
        let x = g.leaf(path.xt);
        let c = g.leaf(cond);
        let target = g.leaf(path.target);
        let out = self.net.forward(&mut g, &bind, x, c, &path.ts)?;
        let loss = g.mse_loss(out, target)?;
        g.backward(loss)?;
        let loss_val = g.value(loss).item()?.to_f64();
        if !loss_val.is_finite() {
            return Err(ModelError::Training(format!(
                "non-finite loss at step {}",
                self.step + 1
            )));
        }

        self.params.zero_grad();
        self.params.harvest(&g, &bind);
        if let Some(max_norm) = tcfg.clip_norm {
            clip_global_norm(&mut self.params, max_norm);
        }
        self.opt.step(&mut self.params)?;
        self.step += 1;
        self.history.push(LogLine {
            step: self.step,
            wall_secs: self.started.elapsed().as_secs_f64(),
            loss: loss_val,
        });
        Ok(loss_val)
    }

    /// Loss of the current parameters on pre-drawn path samples, without
    /// touching gradients, optimizer, or RNG.
    pub fn eval_loss(&self, val: &ValSet<T>) -> Result<f64> {
        let mut total = 0.0;
        for (case, draw) in val.cases.iter().zip(&val.draws) {
            let mut g = Graph::new();
            let bind = self.params.bind(&mut g);
            let x = g.leaf(draw.xt.clone());
            let c = g.leaf(case.cond.clone());
            let target = g.leaf(draw.target.clone());
            let out = self.net.forward(&mut g, &bind, x, c, &[draw.t])?;
            let loss = g.mse_loss(out, target)?;
            total += g.value(loss).item()?.to_f64();
        }
        Ok(total / val.cases.len() as f64)
    }
}

/// A fixed path draw for one validation case.
#[derive(Debug, Clone)]
pub struct ValDraw<T: Scalar> {
    pub t: f64,
    pub xt: Tensor<T>,
    pub target: Tensor<T>,
}

/// Validation cases with noise and times frozen at construction, so epoch-
/// to-epoch comparisons measure the parameters, not the noise draws.
pub struct ValSet<T: Scalar> {
    pub cases: Vec<TrainCase<T>>,
    draws: Vec<ValDraw<T>>,
}

impl<T: Scalar> ValSet<T> {
    pub fn new(
        cases: Vec<TrainCase<T>>,
        objective: Objective,
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<Self> {
        if cases.is_empty() {
            return Err(ModelError::Config("validation set is empty".into()));
        }
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
        let mut draws = Vec::with_capacity(cases.len());
        for case in &cases {
            let noise_data: Vec<T> = (0..case.clean.numel())
                .map(|_| {
                    T::from_f64(<StandardNormal as Distribution<f64>>::sample(
                        &StandardNormal,
                        &mut rng,
                    ))
                })
                .collect();
            let noise = Tensor::new(case.clean.shape(), noise_data).expect("noise shape");
            let draw = match objective {
                Objective::FlowMatching => {
                    let t = rng.gen_range(0.0..1.0);
                    ValDraw {
                        t,
                        xt: crate::flow::interpolate(&noise, &case.clean, t)?,
                        target: crate::flow::velocity_target(&noise, &case.clean)?,
                    }
                }
                Objective::Ddpm => {
                    let step = rng.gen_range(1..=schedule.steps());
                    let ab = schedule.alpha_bar(step);
                    ValDraw {
                        t: step as f64 / schedule.steps() as f64,
                        xt: crate::diffusion::noised(&case.clean, &noise, ab)?,
                        target: noise,
                    }
                }
            };
            draws.push(draw);
        }
        Ok(Self { cases, draws })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

/// Per-epoch summary of a training run.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_secs: f64,
}

/// Run `tcfg.epochs` epochs over `cases`, shuffling each epoch with the
/// state's RNG. Returns one row per epoch.
pub fn train<T: Scalar>(
    state: &mut TrainState<T>,
    tcfg: &TrainConfig,
    cases: &[TrainCase<T>],
    val: Option<&ValSet<T>>,
) -> Result<Vec<EpochStats>> {
    tcfg.validate()?;
    if tcfg.objective != state.objective {
        return Err(ModelError::Config("objective differs from the state's".into()));
    }
    if cases.is_empty() {
        return Err(ModelError::Training("no training cases".into()));
    }
    let started = Instant::now();
    let mut stats = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..cases.len()).collect();
        order.shuffle(&mut state.rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<&TrainCase<T>> = chunk.iter().map(|&i| &cases[i]).collect();
            epoch_loss += state.train_step(tcfg, &batch)?;
            batches += 1;
        }
        let val_loss = match val {
            Some(v) => Some(state.eval_loss(v)?),
            None => None,
        };
        stats.push(EpochStats {
            epoch: epoch + 1,
            train_loss: epoch_loss / batches as f64,
            val_loss,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stratagen_core::facies;
    use stratagen_core::GridDims;

    fn tiny_cfg() -> UNetConfig {
        UNetConfig {
            state_channels: facies::K,
            cond_channels: facies::K + 1,
            levels: 2,
            base_channels: 8,
            channel_mult: 2,
            gn_groups: 8,
            time_embed_dim: 8,
            time_hidden_dim: 16,
            attention: true,
        }
    }

    fn tiny_case(seed: u64) -> TrainCase<f32> {
        let dims = GridDims::cube(4);
        let mut labels = vec![0u8; dims.count()];
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    labels[dims.index(x, y, z)] = if z == 0 {
                        facies::AIR
                    } else if (x + z) % 2 == 0 {
                        facies::MOLLY_DARLING_SANDSTONE
                    } else {
                        facies::SILTSTONE_MUDSTONE
                    };
                }
            }
        }
        let vol = CategoricalVolume::from_labels(dims, labels).unwrap();
        let cond = stratagen_core::sparsity::sample_sparse(&vol, 2, seed).unwrap();
        TrainCase::from_volumes(&vol, &cond).unwrap()
    }

    #[test]
    fn train_step_reduces_loss_on_a_single_case() {
        // Overfit check: 60 steps on one case must cut the loss well below
        // its starting value.
        let mut state =
            TrainState::<f32>::new(tiny_cfg(), Objective::FlowMatching, 3, 1e-3).unwrap();
        let tcfg = TrainConfig {
            objective: Objective::FlowMatching,
            epochs: 1,
            batch_size: 1,
            lr: 1e-3,
            clip_norm: Some(1.0),
            schedule: NoiseSchedule::desk_default(),
        };
        let case = tiny_case(1);
        let mut losses = Vec::new();
        for _ in 0..60 {
            losses.push(state.train_step(&tcfg, &[&case]).unwrap());
        }
        let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        assert_eq!(state.step, 60);
        assert_eq!(state.history.len(), 60);
    }

    #[test]
    fn empty_batch_and_empty_dataset_are_errors() {
        let mut state =
            TrainState::<f32>::new(tiny_cfg(), Objective::FlowMatching, 3, 1e-3).unwrap();
        let tcfg = TrainConfig::desk_default(Objective::FlowMatching);
        assert!(state.train_step(&tcfg, &[]).is_err());
        assert!(train(&mut state, &tcfg, &[], None).is_err());
    }

    #[test]
    fn objective_mismatch_is_rejected() {
        let mut state = TrainState::<f32>::new(tiny_cfg(), Objective::Ddpm, 3, 1e-3).unwrap();
        let tcfg = TrainConfig::desk_default(Objective::FlowMatching);
        let case = tiny_case(2);
        assert!(train(&mut state, &tcfg, &[case], None).is_err());
    }

    #[test]
    fn val_loss_is_stable_when_parameters_do_not_change() {
        let state = TrainState::<f32>::new(tiny_cfg(), Objective::FlowMatching, 5, 1e-3).unwrap();
        let val = ValSet::new(
            vec![tiny_case(3), tiny_case(4)],
            Objective::FlowMatching,
            &NoiseSchedule::desk_default(),
            99,
        )
        .unwrap();
        let a = state.eval_loss(&val).unwrap();
        let b = state.eval_loss(&val).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite() && a > 0.0);
    }

    #[test]
    fn ddpm_training_step_runs_and_logs() {
        let mut state = TrainState::<f32>::new(tiny_cfg(), Objective::Ddpm, 7, 1e-3).unwrap();
        let tcfg = TrainConfig {
            objective: Objective::Ddpm,
            epochs: 2,
            batch_size: 2,
            lr: 1e-3,
            clip_norm: Some(1.0),
            schedule: NoiseSchedule::linear(10, 1e-3, 0.2).unwrap(),
        };
        let cases = vec![tiny_case(5), tiny_case(6), tiny_case(7)];
        let val = ValSet::new(vec![tiny_case(8)], Objective::Ddpm, &tcfg.schedule, 1).unwrap();
        let stats = train(&mut state, &tcfg, &cases, Some(&val)).unwrap();
        assert_eq!(stats.len(), 2);
        for s in &stats {
            assert!(s.train_loss.is_finite());
            assert!(s.val_loss.unwrap().is_finite());
        }
        // 3 cases in batches of 2 -> 2 steps per epoch.
        assert_eq!(state.step, 4);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let run = || -> Vec<f64> {
            let mut state =
                TrainState::<f32>::new(tiny_cfg(), Objective::FlowMatching, 11, 1e-3).unwrap();
            let tcfg = TrainConfig {
                objective: Objective::FlowMatching,
                epochs: 2,
                batch_size: 2,
                lr: 1e-3,
                clip_norm: Some(1.0),
                schedule: NoiseSchedule::desk_default(),
            };
            let cases = vec![tiny_case(1), tiny_case(2), tiny_case(3)];
            train(&mut state, &tcfg, &cases, None).unwrap();
            state.history.iter().map(|l| l.loss).collect()
        };
        assert_eq!(run(), run());
    }
}
