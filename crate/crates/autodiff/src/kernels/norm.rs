//! Group normalization over `[B, C, ...]` tensors.

use crate::scalar::Scalar;

/// Per-(batch, group) statistics saved by the forward pass for backward.
#[derive(Clone, Debug)]
pub struct GroupStats<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`, with mean/var taken
/// over each group of `c/groups` channels and all spatial positions.
pub fn forward<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    batch: usize,
    c: usize,
    spatial: usize,
    groups: usize,
    eps: T,
    y: &mut [T],
) -> GroupStats<T> {
    let cg = c / groups;
    let block = cg * spatial;
    let n = T::from_usize(block);
    let mut stats = GroupStats {
        mean: Vec::with_capacity(batch * groups),
        inv_std: Vec::with_capacity(batch * groups),
    };
    for bi in 0..batch {
        for g in 0..groups {
            let base = bi * c * spatial + g * block;
            let xb = &x[base..base + block];
            let mut sum = T::zero();
            for &v in xb {
                sum = sum + v;
            }
            let mean = sum / n;
            let mut ss = T::zero();
            for &v in xb {
                let dv = v - mean;
                ss = ss + dv * dv;
            }
            let inv_std = T::one() / (ss / n + eps).sqrt();
            stats.mean.push(mean);
            stats.inv_std.push(inv_std);
            let yb = &mut y[base..base + block];
            for ci in 0..cg {
                let ch = g * cg + ci;
                let (ga, be) = (gamma[ch], beta[ch]);
                let xs = &xb[ci * spatial..(ci + 1) * spatial];
                let ys = &mut yb[ci * spatial..(ci + 1) * spatial];
                for (yo, &xv) in ys.iter_mut().zip(xs) {
                    *yo = ga * (xv - mean) * inv_std + be;
                }
            }
        }
    }
    stats
}

/// Backward pass; accumulates into `dx`, `dgamma`, `dbeta`. Any of the three
/// may be `None` when that operand does not need a gradient.
#[allow(clippy::too_many_arguments)]
pub fn backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    gamma: &[T],
    stats: &GroupStats<T>,
    batch: usize,
    c: usize,
    spatial: usize,
    groups: usize,
    mut dx: Option<&mut [T]>,
    mut dgamma: Option<&mut [T]>,
    mut dbeta: Option<&mut [T]>,
) {
    let cg = c / groups;
    let block = cg * spatial;
    let n = T::from_usize(block);
    for bi in 0..batch {
        for g in 0..groups {
            let base = bi * c * spatial + g * block;
            let xb = &x[base..base + block];
            let dyb = &dy[base..base + block];
            let mean = stats.mean[bi * groups + g];
            let inv_std = stats.inv_std[bi * groups + g];

            if let Some(dgamma) = dgamma.as_deref_mut() {
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let xs = &xb[ci * spatial..(ci + 1) * spatial];
                    let dys = &dyb[ci * spatial..(ci + 1) * spatial];
                    let mut acc = T::zero();
                    for (&gv, &xv) in dys.iter().zip(xs) {
                        acc = acc + gv * (xv - mean) * inv_std;
                    }
                    dgamma[ch] = dgamma[ch] + acc;
                }
            }
            if let Some(dbeta) = dbeta.as_deref_mut() {
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let dys = &dyb[ci * spatial..(ci + 1) * spatial];
                    let mut acc = T::zero();
                    for &gv in dys {
                        acc = acc + gv;
                    }
                    dbeta[ch] = dbeta[ch] + acc;
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                // dxhat_i = dy_i * gamma_c; dx_i = inv_std * (dxhat_i
                //   - mean(dxhat) - xhat_i * mean(dxhat * xhat))
                let mut sum_dxhat = T::zero();
                let mut sum_dxhat_xhat = T::zero();
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let ga = gamma[ch];
                    let xs = &xb[ci * spatial..(ci + 1) * spatial];
                    let dys = &dyb[ci * spatial..(ci + 1) * spatial];
                    for (&gv, &xv) in dys.iter().zip(xs) {
                        let dxhat = gv * ga;
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat * (xv - mean) * inv_std;
                    }
                }
                let m1 = sum_dxhat / n;
                let m2 = sum_dxhat_xhat / n;
                let dxb = &mut dx[base..base + block];
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let ga = gamma[ch];
                    let xs = &xb[ci * spatial..(ci + 1) * spatial];
                    let dys = &dyb[ci * spatial..(ci + 1) * spatial];
                    let dxs = &mut dxb[ci * spatial..(ci + 1) * spatial];
                    for ((xo, &gv), &xv) in dxs.iter_mut().zip(dys).zip(xs) {
                        let xhat = (xv - mean) * inv_std;
                        *xo = *xo + inv_std * (gv * ga - m1 - xhat * m2);
                    }
                }
            }
        }
    }
}
