//! Attention-gated 3D U-Net with sinusoidal time conditioning.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stratagen_autodiff::{Graph, GraphBinding, NodeId, ParamId, ParameterSet, Scalar, Tensor};

use crate::error::{ModelError, Result};

const GN_EPS: f64 = 1e-5;

/// Architecture hyperparameters.
///
/// The network consumes `state_channels + cond_channels` input planes
/// (noisy state concatenated with the conditioning volume) and predicts
/// `state_channels` output planes (a velocity field or a noise estimate,
/// depending on the training objective).
#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub state_channels: usize,
    pub cond_channels: usize,
    /// Resolution levels; level `l` runs at 1/2^l of the input resolution.
    pub levels: usize,
    /// Feature width at full resolution.
    pub base_channels: usize,
    /// Width multiplier per level.
    pub channel_mult: usize,
    /// Group count for group normalization (capped at the channel count).
    pub gn_groups: usize,
    /// Width of the sinusoidal time feature vector (must be even).
    pub time_embed_dim: usize,
    /// Hidden width of the time MLP trunk.
    pub time_hidden_dim: usize,
    /// Gate the skip connections; `false` passes skips through unchanged.
    pub attention: bool,
}

impl UNetConfig {
    /// Desk-scale defaults: 3 levels of 16/32/64 channels (~0.5M parameters).
    pub fn desk_default() -> Self {
        Self {
            state_channels: stratagen_core::facies::K,
            cond_channels: stratagen_core::facies::K + 1,
            levels: 3,
            base_channels: 16,
            channel_mult: 2,
            gn_groups: 8,
            time_embed_dim: 32,
            time_hidden_dim: 64,
            attention: true,
        }
    }

    /// Channel width at level `l`.
    pub fn width(&self, l: usize) -> usize {
        self.base_channels * self.channel_mult.pow(l as u32)
    }

    /// Gate bottleneck width for a skip of width `f_l`: half, floored at 4.
    pub fn gate_width(f_l: usize) -> usize {
        (f_l / 2).max(4)
    }

    pub fn in_channels(&self) -> usize {
        self.state_channels + self.cond_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_channels == 0 || self.cond_channels == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        if self.levels == 0 {
            return Err(ModelError::Config("need at least one level".into()));
        }
        if self.base_channels == 0 || self.channel_mult == 0 {
            return Err(ModelError::Config("feature widths must be positive".into()));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(ModelError::Config("time_embed_dim must be even and >= 2".into()));
        }
        if self.time_hidden_dim == 0 || self.gn_groups == 0 {
            return Err(ModelError::Config("time_hidden_dim and gn_groups must be positive".into()));
        }
        // Every normalized tensor must have channels divisible by its group count.
        let mut normed = Vec::new();
        for l in 0..self.levels {
            normed.push(self.width(l));
            if self.attention && l + 1 < self.levels {
                normed.push(Self::gate_width(self.width(l)));
            }
        }
        for c in normed {
            let groups = self.gn_groups.min(c);
            if c % groups != 0 {
                return Err(ModelError::Config(format!(
                    "{c} channels not divisible by {groups} norm groups"
                )));
            }
        }
        Ok(())
    }
}

/// Sinusoidal features for scalar times in `[0, 1]`: interleaved sin/cos over
/// a geometric frequency ladder from 1 to 10^4. Returns a `[batch, dim]` tensor.
pub fn time_features<T: Scalar>(ts: &[f64], dim: usize) -> Tensor<T> {
    assert!(dim >= 2 && dim % 2 == 0, "time feature dim must be even");
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        for i in 0..half {
            let exponent = if half == 1 { 0.0 } else { i as f64 / (half - 1) as f64 };
            let omega = (1.0e4_f64).powf(exponent);
            data.push(T::from_f64((t * omega).sin()));
            data.push(T::from_f64((t * omega).cos()));
        }
    }
    Tensor::new(&[ts.len(), dim], data).expect("time feature shape")
}

#[derive(Debug, Clone, Copy)]
struct Wb {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    conv1: Wb,
    gn1: Affine,
    conv2: Wb,
    gn2: Affine,
    /// Projection from the time trunk to a per-channel bias.
    time: Wb,
}

#[derive(Debug, Clone, Copy)]
struct DownIds {
    conv: Wb,
    gn: Affine,
}

/// Parameters of one attention gate.
///
/// Registered names under `prefix`: `{prefix}.x.w`, `{prefix}.x_gn.g|b`,
/// `{prefix}.g.w`, `{prefix}.g_gn.g|b`, `{prefix}.psi.w`,
/// `{prefix}.psi_gn.g|b`. The gate convolutions are bias-free: each feeds a
/// group normalization, which removes a single-channel bias outright and
/// leaves the rest to the norm's own affine. In particular the `psi_gn`
/// affine pair is the effective scale/bias in front of the sigmoid.
#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    wx: ParamId,
    gn_x: Affine,
    wg: ParamId,
    gn_g: Affine,
    psi: ParamId,
    gn_psi: Affine,
    groups_int: usize,
    inter: usize,
}

fn he_normal<T: Scalar>(dims: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("valid std");
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::new(dims, data).expect("init shape")
}

fn conv_param<T: Scalar>(
    params: &mut ParameterSet<T>,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Wb> {
    let w = params.add(format!("{name}.w"), he_normal(&[c_out, c_in, k, k, k], c_in * k * k * k, rng))?;
    let b = params.add(format!("{name}.b"), Tensor::zeros(&[c_out]))?;
    Ok(Wb { w, b })
}

fn linear_param<T: Scalar>(
    params: &mut ParameterSet<T>,
    name: &str,
    c_in: usize,
    c_out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Wb> {
    let w = params.add(format!("{name}.w"), he_normal(&[c_in, c_out], c_in, rng))?;
    let b = params.add(format!("{name}.b"), Tensor::zeros(&[c_out]))?;
    Ok(Wb { w, b })
}

fn norm_param<T: Scalar>(params: &mut ParameterSet<T>, name: &str, c: usize) -> Result<Affine> {
    let gamma = params.add(format!("{name}.g"), Tensor::full(&[c], T::one()))?;
    let beta = params.add(format!("{name}.b"), Tensor::zeros(&[c]))?;
    Ok(Affine { gamma, beta })
}

impl GateParams {
    /// Register gate parameters for a skip of `x_channels` gated by a signal
    /// of `g_channels`, with an internal width of `inter_channels`.
    pub fn init<T: Scalar>(
        params: &mut ParameterSet<T>,
        prefix: &str,
        x_channels: usize,
        g_channels: usize,
        inter_channels: usize,
        gn_groups: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let groups_int = gn_groups.min(inter_channels);
        if inter_channels % groups_int != 0 {
            return Err(ModelError::Config(format!(
                "gate width {inter_channels} not divisible by {groups_int} groups"
            )));
        }
        let wx = params.add(
            format!("{prefix}.x.w"),
            he_normal(&[inter_channels, x_channels, 1, 1, 1], x_channels, rng),
        )?;
        let gn_x = norm_param(params, &format!("{prefix}.x_gn"), inter_channels)?;
        let wg = params.add(
            format!("{prefix}.g.w"),
            he_normal(&[inter_channels, g_channels, 1, 1, 1], g_channels, rng),
        )?;
        let gn_g = norm_param(params, &format!("{prefix}.g_gn"), inter_channels)?;
        let psi = params.add(
            format!("{prefix}.psi.w"),
            he_normal(&[1, inter_channels, 1, 1, 1], inter_channels, rng),
        )?;
        let gn_psi = norm_param(params, &format!("{prefix}.psi_gn"), 1)?;
        Ok(Self { wx, gn_x, wg, gn_g, psi, gn_psi, groups_int, inter: inter_channels })
    }
}

/// Additive attention gate over a skip connection.
///
/// `alpha = sigmoid(GN(psi * relu(GN(Wx * x) + GN(Wg * g))))`, applied to the
/// skip as `x * alpha` with the single gate channel broadcast across the
/// skip's channels. `x` and `gate_sig` must share batch and spatial dims (the
/// gating signal is upsampled *before* the gate). Returns `(gated_x, alpha)`
/// so callers can inspect the attention coefficients.
pub fn attention_gate<T: Scalar>(
    g: &mut Graph<T>,
    bind: &GraphBinding,
    gate: &GateParams,
    x: NodeId,
    gate_sig: NodeId,
) -> Result<(NodeId, NodeId)> {
    let [bx, _, dx, hx, wx] = g.value(x).dims5()?;
    let [bg, _, dg, hg, wg] = g.value(gate_sig).dims5()?;
    if (bx, dx, hx, wx) != (bg, dg, hg, wg) {
        return Err(ModelError::Config(format!(
            "gate inputs disagree: skip {bx}x..x{dx}x{hx}x{wx} vs signal {bg}x..x{dg}x{hg}x{wg}"
        )));
    }
    let eps = T::from_f64(GN_EPS);
    let zb_int = g.leaf(Tensor::zeros(&[gate.inter]));
    let zb_one = g.leaf(Tensor::zeros(&[1]));
    let tx = g.conv3d(x, bind.node(gate.wx), zb_int, 1, 0)?;
    let tx = g.group_norm(tx, gate.groups_int, bind.node(gate.gn_x.gamma), bind.node(gate.gn_x.beta), eps)?;
    let tg = g.conv3d(gate_sig, bind.node(gate.wg), zb_int, 1, 0)?;
    let tg = g.group_norm(tg, gate.groups_int, bind.node(gate.gn_g.gamma), bind.node(gate.gn_g.beta), eps)?;
    let s = g.add(tx, tg)?;
    let s = g.relu(s)?;
    let p = g.conv3d(s, bind.node(gate.psi), zb_one, 1, 0)?;
    let p = g.group_norm(p, 1, bind.node(gate.gn_psi.gamma), bind.node(gate.gn_psi.beta), eps)?;
    let alpha = g.sigmoid(p)?;
    let gated = g.hadamard(x, alpha)?;
    Ok((gated, alpha))
}

/// U-Net layout: parameter ids plus the configuration that produced them.
#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    time_fc1: Wb,
    time_fc2: Wb,
    enc: Vec<BlockIds>,
    down: Vec<DownIds>,
    /// Decoder blocks indexed by output level (`dec[l]` produces width(l)).
    dec: Vec<BlockIds>,
    gates: Vec<Option<GateParams>>,
    head: Wb,
}

impl UNet {
    /// Create the layout and freshly initialized parameters.
    ///
    /// Weights are He-normal, biases zero, norm scales one; the draw order is
    /// fixed by construction order, so equal seeds give equal parameters.
    pub fn init<T: Scalar>(cfg: UNetConfig, rng: &mut ChaCha8Rng) -> Result<(Self, ParameterSet<T>)> {
        cfg.validate()?;
        let mut params = ParameterSet::new();
        let time_fc1 = linear_param(&mut params, "time.fc1", cfg.time_embed_dim, cfg.time_hidden_dim, rng)?;
        let time_fc2 = linear_param(&mut params, "time.fc2", cfg.time_hidden_dim, cfg.time_hidden_dim, rng)?;

        let mut enc = Vec::with_capacity(cfg.levels);
        let mut down = Vec::new();
        for l in 0..cfg.levels {
            let c_in = if l == 0 { cfg.in_channels() } else { cfg.width(l) };
            let c = cfg.width(l);
            enc.push(Self::block(&mut params, &format!("enc{l}"), c_in, c, cfg.time_hidden_dim, rng)?);
            if l + 1 < cfg.levels {
                down.push(DownIds {
                    conv: conv_param(&mut params, &format!("down{l}.conv"), cfg.width(l + 1), c, 3, rng)?,
                    gn: norm_param(&mut params, &format!("down{l}.gn"), cfg.width(l + 1))?,
                });
            }
        }

        let mut dec: Vec<Option<BlockIds>> = vec![None; cfg.levels.saturating_sub(1)];
        let mut gates: Vec<Option<GateParams>> = vec![None; cfg.levels.saturating_sub(1)];
        for l in (0..cfg.levels.saturating_sub(1)).rev() {
            let skip_c = cfg.width(l);
            let up_c = cfg.width(l + 1);
            if cfg.attention {
                gates[l] = Some(GateParams::init(
                    &mut params,
                    &format!("gate{l}"),
                    skip_c,
                    up_c,
                    UNetConfig::gate_width(skip_c),
                    cfg.gn_groups,
                    rng,
                )?);
            }
            dec[l] = Some(Self::block(
                &mut params,
                &format!("dec{l}"),
                skip_c + up_c,
                skip_c,
                cfg.time_hidden_dim,
                rng,
            )?);
        }
        let dec = dec.into_iter().map(|b| b.expect("decoder block")).collect();

        let head = conv_param(&mut params, "head", cfg.state_channels, cfg.base_channels, 1, rng)?;
        let net = Self { cfg, time_fc1, time_fc2, enc, down, dec, gates, head };
        Ok((net, params))
    }

    fn block<T: Scalar>(
        params: &mut ParameterSet<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        time_hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<BlockIds> {
        Ok(BlockIds {
            conv1: conv_param(params, &format!("{name}.conv1"), c_out, c_in, 3, rng)?,
            gn1: norm_param(params, &format!("{name}.gn1"), c_out)?,
            conv2: conv_param(params, &format!("{name}.conv2"), c_out, c_out, 3, rng)?,
            gn2: norm_param(params, &format!("{name}.gn2"), c_out)?,
            time: linear_param(params, &format!("{name}.time"), time_hidden, c_out, rng)?,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    /// Two convolutions with a time bias injected after the first, pre-norm.
    fn apply_block<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &GraphBinding,
        ids: &BlockIds,
        x: NodeId,
        trunk: NodeId,
        c_out: usize,
    ) -> Result<NodeId> {
        let eps = T::from_f64(GN_EPS);
        let groups = self.cfg.gn_groups.min(c_out);
        let y = g.conv3d(x, bind.node(ids.conv1.w), bind.node(ids.conv1.b), 1, 1)?;
        let tb = g.linear(trunk, bind.node(ids.time.w), bind.node(ids.time.b))?;
        let y = g.add_channel_bias(y, tb)?;
        let y = g.group_norm(y, groups, bind.node(ids.gn1.gamma), bind.node(ids.gn1.beta), eps)?;
        let y = g.relu(y)?;
        let y = g.conv3d(y, bind.node(ids.conv2.w), bind.node(ids.conv2.b), 1, 1)?;
        let y = g.group_norm(y, groups, bind.node(ids.gn2.gamma), bind.node(ids.gn2.beta), eps)?;
        g.relu(y).map_err(Into::into)
    }

    /// Predict the output field for a noisy state and its conditioning.
    ///
    /// `x_state`: `[B, state_channels, D, H, W]`; `cond`:
    /// `[B, cond_channels, D, H, W]`; `ts`: one time in `[0, 1]` per batch
    /// element. Spatial extents must be divisible by `2^(levels-1)`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &GraphBinding,
        x_state: NodeId,
        cond: NodeId,
        ts: &[f64],
    ) -> Result<NodeId> {
        Ok(self.forward_with_gates(g, bind, x_state, cond, ts)?.0)
    }

    /// Like [`UNet::forward`], also returning the attention coefficients for
    /// each gate, ordered deepest gate first (empty when gating is off).
    pub fn forward_with_gates<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &GraphBinding,
        x_state: NodeId,
        cond: NodeId,
        ts: &[f64],
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let [b, cs, d, h, w] = g.value(x_state).dims5()?;
        let [bc, cc, dc, hc, wc] = g.value(cond).dims5()?;
        if cs != self.cfg.state_channels || cc != self.cfg.cond_channels {
            return Err(ModelError::Config(format!(
                "expected {}+{} channels, got {cs}+{cc}",
                self.cfg.state_channels, self.cfg.cond_channels
            )));
        }
        if (b, d, h, w) != (bc, dc, hc, wc) {
            return Err(ModelError::Config("state and conditioning shapes disagree".into()));
        }
        let factor = 1usize << (self.cfg.levels - 1);
        if d % factor != 0 || h % factor != 0 || w % factor != 0 {
            return Err(ModelError::Config(format!(
                "spatial extent {d}x{h}x{w} not divisible by {factor}"
            )));
        }
        if ts.len() != b {
            return Err(ModelError::Config(format!("got {} times for batch {b}", ts.len())));
        }
        if ts.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::Config("non-finite time value".into()));
        }

        let eps = T::from_f64(GN_EPS);
        let emb = g.leaf(time_features::<T>(ts, self.cfg.time_embed_dim));
        let t1 = g.linear(emb, bind.node(self.time_fc1.w), bind.node(self.time_fc1.b))?;
        let t1 = g.relu(t1)?;
        let trunk = g.linear(t1, bind.node(self.time_fc2.w), bind.node(self.time_fc2.b))?;

        let mut cur = g.concat_channels(x_state, cond)?;
        let mut skips = Vec::with_capacity(self.cfg.levels);
        for l in 0..self.cfg.levels {
            cur = self.apply_block(g, bind, &self.enc[l], cur, trunk, self.cfg.width(l))?;
            skips.push(cur);
            if l + 1 < self.cfg.levels {
                let dn = &self.down[l];
                let groups = self.cfg.gn_groups.min(self.cfg.width(l + 1));
                cur = g.conv3d(cur, bind.node(dn.conv.w), bind.node(dn.conv.b), 2, 1)?;
                cur = g.group_norm(cur, groups, bind.node(dn.gn.gamma), bind.node(dn.gn.beta), eps)?;
                cur = g.relu(cur)?;
            }
        }

        let mut alphas = Vec::new();
        for l in (0..self.cfg.levels.saturating_sub(1)).rev() {
            let up = g.upsample_nearest2(cur)?;
            let merged = match &self.gates[l] {
                Some(gate) => {
                    let (gated, alpha) = attention_gate(g, bind, gate, skips[l], up)?;
                    alphas.push(alpha);
                    g.concat_channels(gated, up)?
                }
                None => g.concat_channels(skips[l], up)?,
            };
            cur = self.apply_block(g, bind, &self.dec[l], merged, trunk, self.cfg.width(l))?;
        }

        let out = g.conv3d(cur, bind.node(self.head.w), bind.node(self.head.b), 1, 0)?;
        Ok((out, alphas))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn leaf_random<T: Scalar>(g: &mut Graph<T>, dims: &[usize], rng: &mut ChaCha8Rng) -> NodeId {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n: usize = dims.iter().product();
        let data: Vec<T> = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
        g.leaf(Tensor::new(dims, data).unwrap())
    }

    #[test]
    fn desk_config_parameter_count_is_about_half_a_million() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, params) = UNet::init::<f32>(UNetConfig::desk_default(), &mut rng).unwrap();
        let n = params.total_elements();
        assert!(
            (400_000..650_000).contains(&n),
            "parameter count {n} outside expected band"
        );
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        let cfg = UNetConfig::desk_default();
        let (_, a) = UNet::init::<f32>(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (_, b) = UNet::init::<f32>(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for ((_, pa), (_, pb)) in a.iter().zip(b.iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data());
        }
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = UNetConfig::desk_default();
        cfg.time_embed_dim = 31;
        assert!(cfg.validate().is_err());
        let mut cfg = UNetConfig::desk_default();
        cfg.levels = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = UNetConfig::desk_default();
        cfg.base_channels = 12;
        cfg.gn_groups = 8; // 12 % 8 != 0
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn time_features_are_distinct_across_times() {
        for dim in [2usize, 8, 32] {
            let t: Tensor<f64> = time_features(&[0.0, 0.5, 1.0], dim);
            let rows: Vec<&[f64]> = t.data().chunks(dim).collect();
            assert_ne!(rows[0], rows[1]);
            assert_ne!(rows[1], rows[2]);
            assert_ne!(rows[0], rows[2]);
        }
    }

    fn small_cfg(attention: bool) -> UNetConfig {
        UNetConfig {
            state_channels: 9,
            cond_channels: 10,
            levels: 3,
            base_channels: 8,
            channel_mult: 2,
            gn_groups: 8,
            time_embed_dim: 8,
            time_hidden_dim: 16,
            attention,
        }
    }

    #[test]
    fn forward_produces_state_shaped_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (net, params) = UNet::init::<f32>(small_cfg(true), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = leaf_random(&mut g, &[2, 9, 4, 4, 8], &mut rng);
        let c = leaf_random(&mut g, &[2, 10, 4, 4, 8], &mut rng);
        let (out, alphas) = net.forward_with_gates(&mut g, &bind, x, c, &[0.3, 0.9]).unwrap();
        assert_eq!(g.value(out).dims5().unwrap(), [2, 9, 4, 4, 8]);
        assert_eq!(alphas.len(), 2);
        for a in alphas {
            let v = g.value(a);
            let [_, ca, ..] = v.dims5().unwrap();
            assert_eq!(ca, 1);
            assert!(v.data().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn forward_rejects_indivisible_extents_and_bad_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (net, params) = UNet::init::<f32>(small_cfg(true), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = leaf_random(&mut g, &[1, 9, 6, 4, 4], &mut rng);
        let c = leaf_random(&mut g, &[1, 10, 6, 4, 4], &mut rng);
        assert!(net.forward(&mut g, &bind, x, c, &[0.5]).is_err());
        let x = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut rng);
        let c = leaf_random(&mut g, &[1, 10, 4, 4, 4], &mut rng);
        assert!(net.forward(&mut g, &bind, x, c, &[0.5, 0.6]).is_err());
        assert!(net.forward(&mut g, &bind, x, c, &[f64::NAN]).is_err());
    }

    #[test]
    fn output_depends_on_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (net, params) = UNet::init::<f32>(small_cfg(true), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut rng);
        let c = leaf_random(&mut g, &[1, 10, 4, 4, 4], &mut rng);
        let a = net.forward(&mut g, &bind, x, c, &[0.2]).unwrap();
        let b = net.forward(&mut g, &bind, x, c, &[0.7]).unwrap();
        let max_diff = g
            .value(a)
            .data()
            .iter()
            .zip(g.value(b).data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff > 1e-6, "time change moved output by only {max_diff}");
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (net, params) = UNet::init::<f32>(small_cfg(true), &mut rng).unwrap();
        let run = |seed: u64| -> Vec<f32> {
            let mut g = Graph::new();
            let bind = params.bind(&mut g);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut r);
            let c = leaf_random(&mut g, &[1, 10, 4, 4, 4], &mut r);
            let out = net.forward(&mut g, &bind, x, c, &[0.4]).unwrap();
            g.value(out).data().to_vec()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn attention_off_builds_no_gate_params_and_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (net, params) = UNet::init::<f32>(small_cfg(false), &mut rng).unwrap();
        assert!(params.id_of("gate0.psi.w").is_none());
        assert!(params.id_of("gate1.x.w").is_none());
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut rng);
        let c = leaf_random(&mut g, &[1, 10, 4, 4, 4], &mut rng);
        let (out, alphas) = net.forward_with_gates(&mut g, &bind, x, c, &[0.1]).unwrap();
        assert_eq!(g.value(out).dims5().unwrap(), [1, 9, 4, 4, 4]);
        assert!(alphas.is_empty());
    }

    #[test]
    fn every_parameter_receives_gradient() {
        // Run on the default architecture: with bias-free gate convolutions
        // no parameter direction is normalized away, so every tensor must
        // pick up gradient from a generic input.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (net, mut params) = UNet::init::<f32>(UNetConfig::desk_default(), &mut rng).unwrap();
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut rng);
        let c = leaf_random(&mut g, &[1, 10, 4, 4, 4], &mut rng);
        let out = net.forward(&mut g, &bind, x, c, &[0.6]).unwrap();
        let target = leaf_random(&mut g, &[1, 9, 4, 4, 4], &mut rng);
        let loss = g.mse_loss(out, target).unwrap();
        g.backward(loss).unwrap();
        params.harvest(&g, &bind);
        for (_, p) in params.iter() {
            assert!(
                p.grad.iter().any(|&v| v != 0.0),
                "parameter {} received an all-zero gradient",
                p.name
            );
        }
    }

    // --- attention gate unit behavior ---

    fn gate_fixture(
        seed: u64,
    ) -> (GateParams, ParameterSet<f64>, Tensor<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let gate = GateParams::init(&mut params, "g", 4, 8, 4, 8, &mut rng).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |dims: &[usize]| {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            Tensor::new(dims, data).unwrap()
        };
        let x = draw(&[1, 4, 2, 2, 2]);
        let sig = draw(&[1, 8, 2, 2, 2]);
        (gate, params, x, sig)
    }

    #[test]
    fn gate_coefficients_lie_strictly_inside_unit_interval() {
        let (gate, params, x, sig) = gate_fixture(7);
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let xn = g.leaf(x);
        let sn = g.leaf(sig);
        let (_, alpha) = attention_gate(&mut g, &bind, &gate, xn, sn).unwrap();
        for &a in g.value(alpha).data() {
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn zeroed_psi_weights_give_uniform_half_gate() {
        let (gate, mut params, x, sig) = gate_fixture(8);
        let psi_w = params.id_of("g.psi.w").unwrap();
        params.get_mut(psi_w).value.data_mut().fill(0.0);
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let xn = g.leaf(x.clone());
        let sn = g.leaf(sig);
        let (gated, alpha) = attention_gate(&mut g, &bind, &gate, xn, sn).unwrap();
        for &a in g.value(alpha).data() {
            assert!((a - 0.5).abs() < 1e-12);
        }
        for (h, v) in g.value(gated).data().iter().zip(x.data()) {
            assert!((h - 0.5 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn strongly_negative_presigmoid_bias_suppresses_the_skip() {
        // The psi output is normalized, so the suppression knob is the
        // post-norm affine: zero scale, large negative shift.
        let (gate, mut params, x, sig) = gate_fixture(9);
        let gamma = params.id_of("g.psi_gn.g").unwrap();
        let beta = params.id_of("g.psi_gn.b").unwrap();
        params.get_mut(gamma).value.data_mut().fill(0.0);
        params.get_mut(beta).value.data_mut().fill(-20.0);
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let xn = g.leaf(x.clone());
        let sn = g.leaf(sig);
        let (gated, alpha) = attention_gate(&mut g, &bind, &gate, xn, sn).unwrap();
        for &a in g.value(alpha).data() {
            assert!(a < 1e-8, "alpha = {a}");
        }
        let in_norm: f64 = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let out_norm: f64 = g.value(gated).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(out_norm < 1e-7 * in_norm.max(1.0));
    }

    #[test]
    fn gate_rejects_mismatched_spatial_extents() {
        let (gate, params, x, _) = gate_fixture(10);
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let xn = g.leaf(x);
        let bad = g.leaf(Tensor::zeros(&[1, 8, 4, 2, 2]));
        assert!(attention_gate(&mut g, &bind, &gate, xn, bad).is_err());
    }

    #[test]
    fn gate_gradients_match_finite_differences() {
        let (gate, mut params, x, sig) = gate_fixture(11);
        let eval = |params: &ParameterSet<f64>| -> f64 {
            let mut g = Graph::new();
            let bind = params.bind(&mut g);
            let xn = g.leaf(x.clone());
            let sn = g.leaf(sig.clone());
            let (gated, _) = attention_gate(&mut g, &bind, &gate, xn, sn).unwrap();
            let sq = g.hadamard(gated, gated).unwrap();
            let loss = g.sum_all(sq).unwrap();
            g.value(loss).item().unwrap()
        };

        // Analytic gradients.
        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let xn = g.leaf(x.clone());
        let sn = g.leaf(sig.clone());
        let (gated, _) = attention_gate(&mut g, &bind, &gate, xn, sn).unwrap();
        let sq = g.hadamard(gated, gated).unwrap();
        let loss = g.sum_all(sq).unwrap();
        g.backward(loss).unwrap();
        params.harvest(&g, &bind);

        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        let h = 1e-5;
        for id in ids {
            for i in 0..params.get(id).value.numel() {
                let orig = params.get(id).value.data()[i];
                params.get_mut(id).value.data_mut()[i] = orig + h;
                let up = eval(&params);
                params.get_mut(id).value.data_mut()[i] = orig - h;
                let dn = eval(&params);
                params.get_mut(id).value.data_mut()[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = params.get(id).grad[i];
                let denom = fd.abs().max(an.abs()).max(1.0);
                assert!(
                    (fd - an).abs() / denom < 1e-6,
                    "{}[{i}]: analytic {an} vs fd {fd}",
                    params.get(id).name
                );
            }
        }
    }
}
