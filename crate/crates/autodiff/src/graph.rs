//! Eagerly evaluated autodiff tape.
//!
//! Each op appends a node holding its forward value; `backward` walks the
//! tape in reverse, propagating deltas through a scratch buffer and
//! accumulating gradients on gradient-carrying leaves. Gradients therefore
//! add up across repeated `backward` calls until `zero_grads`.

use crate::error::{Result, TensorError};
use crate::kernels::norm::GroupStats;
use crate::kernels::{conv, elementwise as ew, linear, norm, resample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

enum Op<T> {
    Leaf,
    Conv3d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        dims: conv::ConvDims,
    },
    GroupNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        batch: usize,
        channels: usize,
        spatial: usize,
        stats: GroupStats<T>,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddChannelBias {
        x: NodeId,
        bias: NodeId,
        batch: usize,
        channels: usize,
        spatial: usize,
    },
    Hadamard {
        a: NodeId,
        b: NodeId,
        batch: usize,
        a_channels: usize,
        b_channels: usize,
        spatial: usize,
    },
    ConcatChannels {
        a: NodeId,
        b: NodeId,
        batch: usize,
        ca: usize,
        cb: usize,
        spatial: usize,
    },
    DownsampleStride2 {
        x: NodeId,
        bc: usize,
        d: usize,
        h: usize,
        w: usize,
    },
    UpsampleNearest2 {
        x: NodeId,
        bc: usize,
        d: usize,
        h: usize,
        w: usize,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        batch: usize,
        in_f: usize,
        out_f: usize,
    },
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
    SumAll {
        x: NodeId,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Autodiff tape; build ops through its methods, then call [`Graph::backward`].
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Record an input tensor that does not need a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false, Op::Leaf)
    }

    /// Record a gradient-carrying input (parameters, or inputs under test).
    pub fn leaf_grad(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a gradient-carrying leaf, if backward has
    /// reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn conv3d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let [b, c_in, d, h, w] = self.value(x).dims5()?;
        let [c_out, wc_in, k0, k1, k2] = self.value(weight).dims5()?;
        if k0 != k1 || k1 != k2 {
            return Err(TensorError::Config(format!(
                "conv3d kernel must be cubic, got {}x{}x{}",
                k0, k1, k2
            )));
        }
        if k0 % 2 == 0 {
            return Err(TensorError::Config(format!("conv3d kernel size {} is even", k0)));
        }
        if stride == 0 {
            return Err(TensorError::Config("conv3d stride must be >= 1".into()));
        }
        if wc_in != c_in {
            return Err(TensorError::Shape(format!(
                "conv3d input has {} channels, weight expects {}",
                c_in, wc_in
            )));
        }
        if self.value(bias).numel() != c_out {
            return Err(TensorError::Shape(format!(
                "conv3d bias has {} elements, want {}",
                self.value(bias).numel(),
                c_out
            )));
        }
        let (od, oh, ow) = match (
            conv::out_extent(d, k0, padding, stride),
            conv::out_extent(h, k0, padding, stride),
            conv::out_extent(w, k0, padding, stride),
        ) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(TensorError::Shape(format!(
                    "conv3d kernel {} does not fit input {}x{}x{} with padding {}",
                    k0, d, h, w, padding
                )))
            }
        };
        let dims = conv::ConvDims {
            batch: b,
            c_in,
            c_out,
            k: k0,
            stride,
            padding,
            in_d: d,
            in_h: h,
            in_w: w,
            out_d: od,
            out_h: oh,
            out_w: ow,
        };
        let mut y = Tensor::zeros(&[b, c_out, od, oh, ow]);
        conv::forward(
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            &dims,
            y.data_mut(),
        );
        let rg = self.needs(x) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            y,
            rg,
            Op::Conv3d {
                x,
                w: weight,
                b: bias,
                dims,
            },
        ))
    }

    pub fn group_norm(
        &mut self,
        x: NodeId,
        groups: usize,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
    ) -> Result<NodeId> {
        let [b, c, d, h, w] = self.value(x).dims5()?;
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::Config(format!(
                "group_norm: {} channels not divisible by {} groups",
                c, groups
            )));
        }
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(TensorError::Shape(format!(
                "group_norm affine params must have {} elements",
                c
            )));
        }
        let spatial = d * h * w;
        let mut y = Tensor::zeros(self.value(x).shape());
        let stats = norm::forward(
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            b,
            c,
            spatial,
            groups,
            eps,
            y.data_mut(),
        );
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            y,
            rg,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                batch: b,
                channels: c,
                spatial,
                stats,
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let mut y = Tensor::zeros(self.value(x).shape());
        ew::relu_forward(self.value(x).data(), y.data_mut());
        let rg = self.needs(x);
        Ok(self.push(y, rg, Op::Relu { x }))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let mut y = Tensor::zeros(self.value(x).shape());
        ew::sigmoid_forward(self.value(x).data(), y.data_mut());
        let rg = self.needs(x);
        Ok(self.push(y, rg, Op::Sigmoid { x }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::Shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = Tensor::zeros(self.value(a).shape());
        ew::add_forward(self.value(a).data(), self.value(b).data(), y.data_mut());
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, rg, Op::Add { a, b }))
    }

    /// Elementwise product; a second operand with a single channel is
    /// broadcast across the first operand's channels.
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (batch, a_channels, b_channels, spatial);
        if self.value(a).shape() == self.value(b).shape() {
            batch = 1;
            a_channels = 1;
            b_channels = 1;
            spatial = self.value(a).numel();
        } else {
            let [ba, ca, d, h, w] = self.value(a).dims5().map_err(|_| {
                TensorError::Shape(format!(
                    "hadamard: {:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ))
            })?;
            let [bb, cb, db, hb, wb] = self.value(b).dims5()?;
            if cb != 1 || ba != bb || (d, h, w) != (db, hb, wb) {
                return Err(TensorError::Shape(format!(
                    "hadamard: {:?} vs {:?} (broadcast needs channel-1 second operand)",
                    self.value(a).shape(),
                    self.value(b).shape()
                )));
            }
            batch = ba;
            a_channels = ca;
            b_channels = cb;
            spatial = d * h * w;
        }
        let mut y = Tensor::zeros(self.value(a).shape());
        ew::hadamard_forward(
            self.value(a).data(),
            self.value(b).data(),
            batch,
            a_channels,
            spatial,
            b_channels,
            y.data_mut(),
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(
            y,
            rg,
            Op::Hadamard {
                a,
                b,
                batch,
                a_channels,
                b_channels,
                spatial,
            },
        ))
    }

    /// `x + bias[b, c]`, the bias broadcast over spatial positions.
    pub fn add_channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let [b, c, d, h, w] = self.value(x).dims5()?;
        let [bb, bc] = self.value(bias).dims2()?;
        if bb != b || bc != c {
            return Err(TensorError::Shape(format!(
                "add_channel_bias: x is [{},{},..], bias is [{},{}]",
                b, c, bb, bc
            )));
        }
        let spatial = d * h * w;
        let mut y = Tensor::zeros(self.value(x).shape());
        ew::add_channel_bias_forward(
            self.value(x).data(),
            self.value(bias).data(),
            b,
            c,
            spatial,
            y.data_mut(),
        );
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(
            y,
            rg,
            Op::AddChannelBias {
                x,
                bias,
                batch: b,
                channels: c,
                spatial,
            },
        ))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let [ba, ca, d, h, w] = self.value(a).dims5()?;
        let [bb, cb, db, hb, wb] = self.value(b).dims5()?;
        if ba != bb || (d, h, w) != (db, hb, wb) {
            return Err(TensorError::Shape(format!(
                "concat_channels: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let spatial = d * h * w;
        let mut y = Tensor::zeros(&[ba, ca + cb, d, h, w]);
        ew::concat_channels_forward(
            self.value(a).data(),
            self.value(b).data(),
            ba,
            ca,
            cb,
            spatial,
            y.data_mut(),
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(
            y,
            rg,
            Op::ConcatChannels {
                a,
                b,
                batch: ba,
                ca,
                cb,
                spatial,
            },
        ))
    }

    /// Keep every second voxel along each spatial axis.
    pub fn downsample_stride2(&mut self, x: NodeId) -> Result<NodeId> {
        let [b, c, d, h, w] = self.value(x).dims5()?;
        let mut y = Tensor::zeros(&[b, c, d.div_ceil(2), h.div_ceil(2), w.div_ceil(2)]);
        resample::downsample_forward(self.value(x).data(), b * c, d, h, w, y.data_mut());
        let rg = self.needs(x);
        Ok(self.push(
            y,
            rg,
            Op::DownsampleStride2 {
                x,
                bc: b * c,
                d,
                h,
                w,
            },
        ))
    }

    /// Nearest-neighbor ×2 upsampling along each spatial axis.
    pub fn upsample_nearest2(&mut self, x: NodeId) -> Result<NodeId> {
        let [b, c, d, h, w] = self.value(x).dims5()?;
        let mut y = Tensor::zeros(&[b, c, d * 2, h * 2, w * 2]);
        resample::upsample_forward(self.value(x).data(), b * c, d, h, w, y.data_mut());
        let rg = self.needs(x);
        Ok(self.push(
            y,
            rg,
            Op::UpsampleNearest2 {
                x,
                bc: b * c,
                d,
                h,
                w,
            },
        ))
    }

    /// `y = x W + b` with `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let [batch, in_f] = self.value(x).dims2()?;
        let [win, out_f] = self.value(weight).dims2()?;
        if win != in_f || self.value(bias).numel() != out_f {
            return Err(TensorError::Shape(format!(
                "linear: x [{},{}], W [{},{}], b [{}]",
                batch,
                in_f,
                win,
                out_f,
                self.value(bias).numel()
            )));
        }
        let mut y = Tensor::zeros(&[batch, out_f]);
        linear::forward(
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            batch,
            in_f,
            out_f,
            y.data_mut(),
        );
        let rg = self.needs(x) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            y,
            rg,
            Op::Linear {
                x,
                w: weight,
                b: bias,
                batch,
                in_f,
                out_f,
            },
        ))
    }

    /// Mean of squared elementwise differences, as a rank-0 tensor.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.value(pred).shape() != self.value(target).shape() {
            return Err(TensorError::Shape(format!(
                "mse_loss: {:?} vs {:?}",
                self.value(pred).shape(),
                self.value(target).shape()
            )));
        }
        let v = ew::mse_forward(self.value(pred).data(), self.value(target).data());
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(v), rg, Op::MseLoss { pred, target }))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let v = ew::sum_all(self.value(x).data());
        let rg = self.needs(x);
        Ok(self.push(Tensor::scalar(v), rg, Op::SumAll { x }))
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate on
    /// gradient-carrying leaves; call repeatedly to add contributions.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward on non-scalar node of shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(TensorError::Usage(
                "backward on a node with no gradient-carrying ancestors".into(),
            ));
        }
        let n = loss.0 + 1;
        // Per-sweep deltas live apart from stored grads so repeated backward
        // calls accumulate correctly instead of re-propagating old gradients.
        let mut delta: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
        delta.resize_with(n, || None);
        delta[loss.0] = Some(vec![T::one()]);
        for id in (0..n).rev() {
            let Some(gy) = delta[id].take() else {
                continue;
            };
            self.propagate(id, &gy, &mut delta);
            let node = &mut self.nodes[id];
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let numel = node.value.numel();
                let g = node.grad.get_or_insert_with(|| vec![T::zero(); numel]);
                ew::accumulate(g, &gy);
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, gy: &[T], delta: &mut [Option<Vec<T>>]) {
        // Fetch-or-create the delta buffer for an input node.
        macro_rules! buf {
            ($nid:expr) => {{
                let numel = self.nodes[$nid.0].value.numel();
                delta[$nid.0].get_or_insert_with(|| vec![T::zero(); numel])
            }};
        }
        macro_rules! needs {
            ($nid:expr) => {
                self.nodes[$nid.0].requires_grad
            };
        }
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Conv3d { x, w, b, dims } => {
                if needs!(x) {
                    conv::backward_input(gy, self.nodes[w.0].value.data(), dims, buf!(x));
                }
                if needs!(w) {
                    conv::backward_weight(gy, self.nodes[x.0].value.data(), dims, buf!(w));
                }
                if needs!(b) {
                    conv::backward_bias(gy, dims, buf!(b));
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                batch,
                channels,
                spatial,
                stats,
            } => {
                let xv = self.nodes[x.0].value.data();
                let gv = self.nodes[gamma.0].value.data();
                let (nx, ng, nb) = (needs!(x), needs!(gamma), needs!(beta));
                if !(nx || ng || nb) {
                    return;
                }
                // Buffers must be materialized one at a time (they may alias
                // the same slice only through distinct ids, but the borrow
                // checker cannot see that), so take them in sequence.
                let mut dx = if nx { Some(std::mem::take(buf!(x))) } else { None };
                let mut dgamma = if ng {
                    Some(std::mem::take(buf!(gamma)))
                } else {
                    None
                };
                let mut dbeta = if nb { Some(std::mem::take(buf!(beta))) } else { None };
                norm::backward(
                    gy,
                    xv,
                    gv,
                    stats,
                    *batch,
                    *channels,
                    *spatial,
                    *groups,
                    dx.as_deref_mut(),
                    dgamma.as_deref_mut(),
                    dbeta.as_deref_mut(),
                );
                if let Some(v) = dx {
                    delta[x.0] = Some(v);
                }
                if let Some(v) = dgamma {
                    delta[gamma.0] = Some(v);
                }
                if let Some(v) = dbeta {
                    delta[beta.0] = Some(v);
                }
            }
            Op::Relu { x } => {
                if needs!(x) {
                    let xv = self.nodes[x.0].value.data();
                    ew::relu_backward(gy, xv, buf!(x));
                }
            }
            Op::Sigmoid { x } => {
                if needs!(x) {
                    let yv = self.nodes[id].value.data();
                    ew::sigmoid_backward(gy, yv, buf!(x));
                }
            }
            Op::Add { a, b } => {
                if needs!(a) {
                    ew::accumulate(buf!(a), gy);
                }
                if needs!(b) {
                    ew::accumulate(buf!(b), gy);
                }
            }
            Op::AddChannelBias {
                x,
                bias,
                batch,
                channels,
                spatial,
            } => {
                if needs!(x) {
                    ew::accumulate(buf!(x), gy);
                }
                if needs!(bias) {
                    ew::add_channel_bias_backward_bias(gy, *batch, *channels, *spatial, buf!(bias));
                }
            }
            Op::Hadamard {
                a,
                b,
                batch,
                a_channels,
                b_channels,
                spatial,
            } => {
                if a == b {
                    // Same operand twice (squaring): d/dx (x*x) = 2x.
                    if needs!(a) {
                        let av = self.nodes[a.0].value.data();
                        let buf = buf!(a);
                        for ((o, &g), &v) in buf.iter_mut().zip(gy).zip(av) {
                            *o = *o + g * (v + v);
                        }
                    }
                    return;
                }
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let (na, nb) = (needs!(a), needs!(b));
                if !(na || nb) {
                    return;
                }
                let mut da = if na { Some(std::mem::take(buf!(a))) } else { None };
                let mut db = if nb { Some(std::mem::take(buf!(b))) } else { None };
                ew::hadamard_backward(
                    gy,
                    av,
                    bv,
                    *batch,
                    *a_channels,
                    *spatial,
                    *b_channels,
                    da.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(v) = da {
                    delta[a.0] = Some(v);
                }
                if let Some(v) = db {
                    delta[b.0] = Some(v);
                }
            }
            Op::ConcatChannels {
                a,
                b,
                batch,
                ca,
                cb,
                spatial,
            } => {
                if a == b {
                    // Same operand in both halves: both slices flow back to it.
                    if needs!(a) {
                        let mut da = std::mem::take(buf!(a));
                        ew::concat_channels_backward(gy, *batch, *ca, *cb, *spatial, Some(&mut da), None);
                        ew::concat_channels_backward(gy, *batch, *ca, *cb, *spatial, None, Some(&mut da));
                        delta[a.0] = Some(da);
                    }
                    return;
                }
                let (na, nb) = (needs!(a), needs!(b));
                if !(na || nb) {
                    return;
                }
                let mut da = if na { Some(std::mem::take(buf!(a))) } else { None };
                let mut db = if nb { Some(std::mem::take(buf!(b))) } else { None };
                ew::concat_channels_backward(
                    gy,
                    *batch,
                    *ca,
                    *cb,
                    *spatial,
                    da.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(v) = da {
                    delta[a.0] = Some(v);
                }
                if let Some(v) = db {
                    delta[b.0] = Some(v);
                }
            }
            Op::DownsampleStride2 { x, bc, d, h, w } => {
                if needs!(x) {
                    resample::downsample_backward(gy, *bc, *d, *h, *w, buf!(x));
                }
            }
            Op::UpsampleNearest2 { x, bc, d, h, w } => {
                if needs!(x) {
                    resample::upsample_backward(gy, *bc, *d, *h, *w, buf!(x));
                }
            }
            Op::Linear {
                x,
                w,
                b,
                batch,
                in_f,
                out_f,
            } => {
                let xv = self.nodes[x.0].value.data();
                let wv = self.nodes[w.0].value.data();
                let (nx, nw, nb) = (needs!(x), needs!(w), needs!(b));
                if !(nx || nw || nb) {
                    return;
                }
                let mut dx = if nx { Some(std::mem::take(buf!(x))) } else { None };
                let mut dw = if nw { Some(std::mem::take(buf!(w))) } else { None };
                let mut db = if nb { Some(std::mem::take(buf!(b))) } else { None };
                linear::backward(
                    gy,
                    xv,
                    wv,
                    *batch,
                    *in_f,
                    *out_f,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(v) = dx {
                    delta[x.0] = Some(v);
                }
                if let Some(v) = dw {
                    delta[w.0] = Some(v);
                }
                if let Some(v) = db {
                    delta[b.0] = Some(v);
                }
            }
            Op::MseLoss { pred, target } => {
                let pv = self.nodes[pred.0].value.data();
                let tv = self.nodes[target.0].value.data();
                let (np, nt) = (needs!(pred), needs!(target));
                if !(np || nt) {
                    return;
                }
                let mut dp = if np {
                    Some(std::mem::take(buf!(pred)))
                } else {
                    None
                };
                let mut dt = if nt {
                    Some(std::mem::take(buf!(target)))
                } else {
                    None
                };
                ew::mse_backward(gy[0], pv, tv, dp.as_deref_mut(), dt.as_deref_mut());
                if let Some(v) = dp {
                    delta[pred.0] = Some(v);
                }
                if let Some(v) = dt {
                    delta[target.0] = Some(v);
                }
            }
            Op::SumAll { x } => {
                if needs!(x) {
                    let g = gy[0];
                    for v in buf!(x).iter_mut() {
                        *v = *v + g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor5(shape: [usize; 5], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(&shape, data).unwrap()
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let mut g = Graph::new();
        let c = 3;
        let x_data: Vec<f64> = (0..2 * c * 8).map(|i| (i as f64) * 0.37 - 4.0).collect();
        let x = g.leaf(tensor5([2, c, 2, 2, 2], x_data.clone()));
        let mut w_data = vec![0.0; c * c];
        for i in 0..c {
            w_data[i * c + i] = 1.0; // w[i, i, 0, 0, 0]
        }
        let w = g.leaf(tensor5([c, c, 1, 1, 1], w_data));
        let b = g.leaf(Tensor::zeros(&[c]));
        let y = g.conv3d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &x_data[..]);
    }

    #[test]
    fn conv_counting_case() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 1, 3, 3, 3], 1.0f64));
        let w = g.leaf(Tensor::full(&[1, 1, 3, 3, 3], 1.0f64));
        let b = g.leaf(Tensor::zeros(&[1]));
        let y = g.conv3d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(g.value(y).data()[0], 27.0);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 3, 4, 4, 4]));
        let w_bad_c = g.leaf(Tensor::zeros(&[2, 4, 1, 1, 1]));
        let b2 = g.leaf(Tensor::zeros(&[2]));
        assert!(matches!(
            g.conv3d(x, w_bad_c, b2, 1, 0),
            Err(TensorError::Shape(_))
        ));
        let w_even = g.leaf(Tensor::zeros(&[2, 3, 2, 2, 2]));
        assert!(matches!(
            g.conv3d(x, w_even, b2, 1, 0),
            Err(TensorError::Config(_))
        ));
    }

    #[test]
    fn group_norm_constant_input_maps_to_beta() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 4, 2, 2, 2], 5.0f64));
        let gamma = g.leaf(Tensor::full(&[4], 1.0f64));
        let beta = g.leaf(Tensor::zeros(&[4]));
        let y = g.group_norm(x, 2, gamma, beta, 1e-5).unwrap();
        for &v in g.value(y).data() {
            assert!(v.abs() < 1e-9, "constant input should normalize to 0, got {v}");
        }
        // gamma = 0, beta = 7 collapses the output to the affine shift.
        let gamma0 = g.leaf(Tensor::zeros(&[4]));
        let beta7 = g.leaf(Tensor::full(&[4], 7.0f64));
        let x2 = g.leaf(tensor5([1, 4, 2, 2, 2], (0..32).map(|i| i as f64).collect()));
        let y2 = g.group_norm(x2, 2, gamma0, beta7, 1e-5).unwrap();
        for &v in g.value(y2).data() {
            assert_eq!(v, 7.0);
        }
    }

    #[test]
    fn group_norm_normalizes_per_group() {
        let mut g = Graph::new();
        let (b, c, s) = (2, 6, 27);
        let data: Vec<f64> = (0..b * c * s)
            .map(|i| ((i * 2654435761usize) % 1000) as f64 / 100.0 - 5.0)
            .collect();
        let x = g.leaf(tensor5([b, c, 3, 3, 3], data));
        let gamma = g.leaf(Tensor::full(&[c], 1.0f64));
        let beta = g.leaf(Tensor::zeros(&[c]));
        let groups = 3;
        let y = g.group_norm(x, groups, gamma, beta, 1e-9).unwrap();
        let yd = g.value(y).data();
        let block = (c / groups) * s;
        for bi in 0..b {
            for gi in 0..groups {
                let seg = &yd[bi * c * s + gi * block..][..block];
                let mean: f64 = seg.iter().sum::<f64>() / block as f64;
                let var: f64 = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / block as f64;
                assert!(mean.abs() < 1e-5, "group mean {mean}");
                assert!((var - 1.0).abs() < 1e-3, "group var {var}");
            }
        }
    }

    #[test]
    fn group_norm_rejects_indivisible_groups() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 6, 2, 2, 2]));
        let gamma = g.leaf(Tensor::zeros(&[6]));
        let beta = g.leaf(Tensor::zeros(&[6]));
        assert!(matches!(
            g.group_norm(x, 4, gamma, beta, 1e-5),
            Err(TensorError::Config(_))
        ));
    }

    #[test]
    fn pointwise_trivial_values() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(&[3], vec![-3.0f64, 0.0, 2.0]).unwrap());
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).data()[1], 0.5);
    }

    #[test]
    fn hadamard_with_unit_mask_is_identity() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..2 * 3 * 8).map(|i| i as f64 - 20.0).collect();
        let x = g.leaf(tensor5([2, 3, 2, 2, 2], data.clone()));
        let ones = g.leaf(Tensor::full(&[2, 1, 2, 2, 2], 1.0f64));
        let y = g.hadamard(x, ones).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn mse_trivial_values() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::full(&[4], 3.0f64));
        let b = g.leaf(Tensor::full(&[4], 3.0f64));
        let zero = g.mse_loss(a, b).unwrap();
        assert_eq!(g.value(zero).item().unwrap(), 0.0);
        let c = g.leaf(Tensor::full(&[4], 5.0f64));
        let four = g.mse_loss(c, a).unwrap();
        assert_eq!(g.value(four).item().unwrap(), 4.0);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf_grad(Tensor::new(&[4], vec![1.0f64, -2.0, 3.0, 0.5]).unwrap());
        let s = g.sum_all(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_scalar_mse_against_zero() {
        // loss = mse(x, 0) with x = 3, N = 1 → dloss/dx = 2·3 = 6.
        let mut g = Graph::new();
        let x = g.leaf_grad(Tensor::new(&[1], vec![3.0f64]).unwrap());
        let zero = g.leaf(Tensor::zeros(&[1]));
        let l = g.mse_loss(x, zero).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_usage_error() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf_grad(Tensor::zeros(&[3]));
        let r = g.relu(x).unwrap();
        assert!(matches!(g.backward(r), Err(TensorError::Usage(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf_grad(Tensor::new(&[2], vec![1.0f64, 2.0]).unwrap());
        let s = g.sum_all(x).unwrap();
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn concat_splits_gradient() {
        let mut g = Graph::new();
        let a = g.leaf_grad(Tensor::full(&[1, 2, 1, 1, 2], 1.0f64));
        let b = g.leaf_grad(Tensor::full(&[1, 1, 1, 1, 2], 2.0f64));
        let y = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 1, 1, 2]);
        assert_eq!(g.value(y).data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        let s = g.sum_all(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0; 4]);
        assert_eq!(g.grad(b).unwrap(), &[1.0; 2]);
    }

    #[test]
    fn resample_shapes_and_values() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let x = g.leaf(tensor5([1, 1, 4, 4, 4], data));
        let d = g.downsample_stride2(x).unwrap();
        assert_eq!(g.value(d).shape(), &[1, 1, 2, 2, 2]);
        // Voxel (z, y, x) of the output comes from (2z, 2y, 2x).
        assert_eq!(g.value(d).data(), &[0.0, 2.0, 8.0, 10.0, 32.0, 34.0, 40.0, 42.0]);
        let u = g.upsample_nearest2(d).unwrap();
        assert_eq!(g.value(u).shape(), &[1, 1, 4, 4, 4]);
        let ud = g.value(u).data();
        assert_eq!(ud[0], 0.0);
        assert_eq!(ud[1], 0.0);
        assert_eq!(ud[2], 2.0);
        assert_eq!(ud[4], 0.0); // start of second row duplicates row 0
    }

    #[test]
    fn forward_and_gradients_are_deterministic() {
        let run = || {
            let mut g = Graph::<f32>::new();
            let data: Vec<f32> = (0..2 * 19 * 64)
                .map(|i| ((i * 40503) % 65536) as f32 / 65536.0 - 0.5)
                .collect();
            let x = g.leaf_grad(Tensor::new(&[2, 19, 4, 4, 4], data).unwrap());
            let wd: Vec<f32> = (0..8 * 19 * 27)
                .map(|i| ((i * 48271) % 65536) as f32 / 65536.0 - 0.5)
                .collect();
            let w = g.leaf_grad(Tensor::new(&[8, 19, 3, 3, 3], wd).unwrap());
            let b = g.leaf_grad(Tensor::zeros(&[8]));
            let y = g.conv3d(x, w, b, 1, 1).unwrap();
            let r = g.relu(y).unwrap();
            let t = g.leaf(Tensor::full(&[2, 8, 4, 4, 4], 0.25f32));
            let l = g.mse_loss(r, t).unwrap();
            g.backward(l).unwrap();
            (
                g.value(l).item().unwrap().to_bits(),
                g.grad(w).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
