//! Finite-difference checks for every differentiable op, exercised both by
//! this crate's tests and by the acceptance suite.
//!
//! Each check builds the op in `f64`, reduces its output to a scalar through
//! a fixed random projection, and compares analytic gradients of every
//! input against central differences (h = 1e-4).

use super::{central_difference, max_relative_error};
use crate::{Graph, NodeId, Result, Tensor};

pub const FD_STEP: f64 = 1e-4;

/// Result of one op check.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_err: f64,
}

/// Deterministic filler: splitmix64 mapped to [lo, hi).
fn fill(state: &mut u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            *state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = *state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            lo + (hi - lo) * (z as f64 / u64::MAX as f64)
        })
        .collect()
}

fn rand_tensor(state: &mut u64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, fill(state, n, lo, hi)).expect("shape/data consistent")
}

/// Input spec: tensor plus whether its gradient is under test.
struct In(Tensor<f64>, bool);

fn run_check<F>(name: &str, inputs: &[In], build: F) -> OpCheck
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    // Analytic pass.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|In(t, grad)| {
            if *grad {
                g.leaf_grad(t.clone())
            } else {
                g.leaf(t.clone())
            }
        })
        .collect();
    let loss = build(&mut g, &ids).expect("op construction must succeed");
    assert_eq!(g.value(loss).numel(), 1, "{name}: loss must be scalar");
    g.backward(loss).expect("backward");

    let mut worst = 0.0f64;
    for (i, In(t, grad)) in inputs.iter().enumerate() {
        if !*grad {
            continue;
        }
        let analytic = g.grad(ids[i]).expect("flagged input must get a gradient").to_vec();
        let f = |xs: &[f64]| -> f64 {
            let mut g2 = Graph::new();
            let ids2: Vec<NodeId> = inputs
                .iter()
                .enumerate()
                .map(|(j, In(tj, _))| {
                    if j == i {
                        g2.leaf(Tensor::new(tj.shape(), xs.to_vec()).unwrap())
                    } else {
                        g2.leaf(tj.clone())
                    }
                })
                .collect();
            let l = build(&mut g2, &ids2).expect("op construction must succeed");
            g2.value(l).item().unwrap()
        };
        let numeric = central_difference(f, t.data(), FD_STEP);
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    OpCheck {
        name: name.to_string(),
        max_rel_err: worst,
    }
}

/// Scalar projection `sum(y ⊙ r)` with a fixed random `r` appended as the
/// last input, so vector-valued ops reduce to a differentiable scalar.
fn project(g: &mut Graph<f64>, y: NodeId, r: NodeId) -> Result<NodeId> {
    let p = g.hadamard(y, r)?;
    g.sum_all(p)
}

pub fn conv3d_check(seed: u64, k: usize, stride: usize, padding: usize) -> OpCheck {
    let mut st = seed;
    let (ci, co) = (3, 4);
    let x = rand_tensor(&mut st, &[2, ci, 4, 4, 4], -1.0, 1.0);
    let w = rand_tensor(&mut st, &[co, ci, k, k, k], -0.5, 0.5);
    let b = rand_tensor(&mut st, &[co], -0.2, 0.2);
    let spatial = |n: usize| (n + 2 * padding - k) / stride + 1;
    let os = spatial(4);
    let r = rand_tensor(&mut st, &[2, co, os, os, os], -1.0, 1.0);
    run_check(
        &format!("conv3d k={k} stride={stride} padding={padding}"),
        &[In(x, true), In(w, true), In(b, true), In(r, false)],
        |g, ids| {
            let y = g.conv3d(ids[0], ids[1], ids[2], stride, padding)?;
            project(g, y, ids[3])
        },
    )
}

pub fn group_norm_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 6, 3, 3, 3], -2.0, 2.0);
    let gamma = rand_tensor(&mut st, &[6], 0.5, 1.5);
    let beta = rand_tensor(&mut st, &[6], -0.5, 0.5);
    let r = rand_tensor(&mut st, &[2, 6, 3, 3, 3], -1.0, 1.0);
    run_check(
        "group_norm groups=3",
        &[In(x, true), In(gamma, true), In(beta, true), In(r, false)],
        |g, ids| {
            let y = g.group_norm(ids[0], 3, ids[1], ids[2], 1e-5)?;
            project(g, y, ids[3])
        },
    )
}

pub fn relu_check(seed: u64) -> OpCheck {
    let mut st = seed;
    // Keep inputs away from the kink at 0 where finite differences are wrong.
    let mag = fill(&mut st, 250, 0.2, 1.2);
    let sign = fill(&mut st, 250, -1.0, 1.0);
    let data: Vec<f64> = mag
        .iter()
        .zip(&sign)
        .map(|(&m, &s)| if s < 0.0 { -m } else { m })
        .collect();
    let x = Tensor::new(&[2, 5, 5, 5], data).unwrap();
    let r = rand_tensor(&mut st, &[2, 5, 5, 5], -1.0, 1.0);
    run_check("relu", &[In(x, true), In(r, false)], |g, ids| {
        let y = g.relu(ids[0])?;
        project(g, y, ids[1])
    })
}

pub fn sigmoid_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 4, 5, 5], -3.0, 3.0);
    let r = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    run_check("sigmoid", &[In(x, true), In(r, false)], |g, ids| {
        let y = g.sigmoid(ids[0])?;
        project(g, y, ids[1])
    })
}

pub fn add_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let a = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    let b = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    run_check("add", &[In(a, true), In(b, true), In(r, false)], |g, ids| {
        let y = g.add(ids[0], ids[1])?;
        project(g, y, ids[2])
    })
}

pub fn hadamard_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let a = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    let b = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    run_check(
        "hadamard",
        &[In(a, true), In(b, true), In(r, false)],
        |g, ids| {
            let y = g.hadamard(ids[0], ids[1])?;
            project(g, y, ids[2])
        },
    )
}

pub fn hadamard_broadcast_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let a = rand_tensor(&mut st, &[2, 4, 3, 3, 3], -1.0, 1.0);
    let alpha = rand_tensor(&mut st, &[2, 1, 3, 3, 3], 0.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 4, 3, 3, 3], -1.0, 1.0);
    run_check(
        "hadamard channel-broadcast",
        &[In(a, true), In(alpha, true), In(r, false)],
        |g, ids| {
            let y = g.hadamard(ids[0], ids[1])?;
            project(g, y, ids[2])
        },
    )
}

pub fn add_channel_bias_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 4, 3, 3, 3], -1.0, 1.0);
    let bias = rand_tensor(&mut st, &[2, 4], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 4, 3, 3, 3], -1.0, 1.0);
    run_check(
        "add_channel_bias",
        &[In(x, true), In(bias, true), In(r, false)],
        |g, ids| {
            let y = g.add_channel_bias(ids[0], ids[1])?;
            project(g, y, ids[2])
        },
    )
}

pub fn concat_channels_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let a = rand_tensor(&mut st, &[2, 3, 3, 3, 3], -1.0, 1.0);
    let b = rand_tensor(&mut st, &[2, 2, 3, 3, 3], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 5, 3, 3, 3], -1.0, 1.0);
    run_check(
        "concat_channels",
        &[In(a, true), In(b, true), In(r, false)],
        |g, ids| {
            let y = g.concat_channels(ids[0], ids[1])?;
            project(g, y, ids[2])
        },
    )
}

pub fn downsample_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 3, 4, 4, 4], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 3, 2, 2, 2], -1.0, 1.0);
    run_check("downsample_stride2", &[In(x, true), In(r, false)], |g, ids| {
        let y = g.downsample_stride2(ids[0])?;
        project(g, y, ids[1])
    })
}

pub fn upsample_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 3, 2, 2, 2], -1.0, 1.0);
    let r = rand_tensor(&mut st, &[2, 3, 4, 4, 4], -1.0, 1.0);
    run_check("upsample_nearest2", &[In(x, true), In(r, false)], |g, ids| {
        let y = g.upsample_nearest2(ids[0])?;
        project(g, y, ids[1])
    })
}

pub fn linear_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[3, 7], -1.0, 1.0);
    let w = rand_tensor(&mut st, &[7, 5], -0.5, 0.5);
    let b = rand_tensor(&mut st, &[5], -0.2, 0.2);
    let r = rand_tensor(&mut st, &[3, 5], -1.0, 1.0);
    run_check(
        "linear",
        &[In(x, true), In(w, true), In(b, true), In(r, false)],
        |g, ids| {
            let y = g.linear(ids[0], ids[1], ids[2])?;
            project(g, y, ids[3])
        },
    )
}

pub fn mse_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let p = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    let t = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    run_check("mse_loss", &[In(p, true), In(t, true)], |g, ids| {
        g.mse_loss(ids[0], ids[1])
    })
}

pub fn sum_all_check(seed: u64) -> OpCheck {
    let mut st = seed;
    let x = rand_tensor(&mut st, &[2, 4, 5, 5], -1.0, 1.0);
    run_check("sum_all", &[In(x, true)], |g, ids| g.sum_all(ids[0]))
}

/// Every op check at the given seed.
pub fn all(seed: u64) -> Vec<OpCheck> {
    vec![
        conv3d_check(seed, 3, 1, 1),
        conv3d_check(seed ^ 1, 3, 2, 1),
        conv3d_check(seed ^ 2, 1, 1, 0),
        group_norm_check(seed),
        relu_check(seed),
        sigmoid_check(seed),
        add_check(seed),
        hadamard_check(seed),
        hadamard_broadcast_check(seed),
        add_channel_bias_check(seed),
        concat_channels_check(seed),
        downsample_check(seed),
        upsample_check(seed),
        linear_check(seed),
        mse_check(seed),
        sum_all_check(seed),
    ]
}
