//! Pointwise ops and reductions.

use crate::scalar::Scalar;

pub fn relu_forward<T: Scalar>(x: &[T], y: &mut [T]) {
    for (yo, &xv) in y.iter_mut().zip(x) {
        *yo = if xv > T::zero() { xv } else { T::zero() };
    }
}

/// Accumulates `dy * 1[x > 0]` into `dx`.
pub fn relu_backward<T: Scalar>(dy: &[T], x: &[T], dx: &mut [T]) {
    for ((xo, &gv), &xv) in dx.iter_mut().zip(dy).zip(x) {
        if xv > T::zero() {
            *xo = *xo + gv;
        }
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &[T], y: &mut [T]) {
    for (yo, &xv) in y.iter_mut().zip(x) {
        *yo = T::one() / (T::one() + (-xv).exp());
    }
}

/// Accumulates `dy * y * (1 - y)` into `dx`, using the forward output `y`.
pub fn sigmoid_backward<T: Scalar>(dy: &[T], y: &[T], dx: &mut [T]) {
    for ((xo, &gv), &yv) in dx.iter_mut().zip(dy).zip(y) {
        *xo = *xo + gv * yv * (T::one() - yv);
    }
}

pub fn add_forward<T: Scalar>(a: &[T], b: &[T], y: &mut [T]) {
    for ((yo, &av), &bv) in y.iter_mut().zip(a).zip(b) {
        *yo = av + bv;
    }
}

pub fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Elementwise product. When `b_channels == 1` and `a` has more channels, the
/// single channel of `b` is broadcast across all channels of `a`.
pub fn hadamard_forward<T: Scalar>(
    a: &[T],
    b: &[T],
    batch: usize,
    a_channels: usize,
    spatial: usize,
    b_channels: usize,
    y: &mut [T],
) {
    if a_channels == b_channels {
        for ((yo, &av), &bv) in y.iter_mut().zip(a).zip(b) {
            *yo = av * bv;
        }
        return;
    }
    debug_assert_eq!(b_channels, 1);
    for bi in 0..batch {
        let bs = &b[bi * spatial..(bi + 1) * spatial];
        for c in 0..a_channels {
            let off = (bi * a_channels + c) * spatial;
            let as_ = &a[off..off + spatial];
            let ys = &mut y[off..off + spatial];
            for ((yo, &av), &bv) in ys.iter_mut().zip(as_).zip(bs) {
                *yo = av * bv;
            }
        }
    }
}

/// Gradients of the (possibly broadcast) product; accumulates into `da`/`db`.
#[allow(clippy::too_many_arguments)]
pub fn hadamard_backward<T: Scalar>(
    dy: &[T],
    a: &[T],
    b: &[T],
    batch: usize,
    a_channels: usize,
    spatial: usize,
    b_channels: usize,
    mut da: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    if a_channels == b_channels {
        if let Some(da) = da.as_deref_mut() {
            for ((xo, &gv), &bv) in da.iter_mut().zip(dy).zip(b) {
                *xo = *xo + gv * bv;
            }
        }
        if let Some(db) = db.as_deref_mut() {
            for ((xo, &gv), &av) in db.iter_mut().zip(dy).zip(a) {
                *xo = *xo + gv * av;
            }
        }
        return;
    }
    debug_assert_eq!(b_channels, 1);
    for bi in 0..batch {
        let bs = &b[bi * spatial..(bi + 1) * spatial];
        for c in 0..a_channels {
            let off = (bi * a_channels + c) * spatial;
            let dys = &dy[off..off + spatial];
            if let Some(da) = da.as_deref_mut() {
                let das = &mut da[off..off + spatial];
                for ((xo, &gv), &bv) in das.iter_mut().zip(dys).zip(bs) {
                    *xo = *xo + gv * bv;
                }
            }
            if let Some(db) = db.as_deref_mut() {
                let as_ = &a[off..off + spatial];
                let dbs = &mut db[bi * spatial..(bi + 1) * spatial];
                for ((xo, &gv), &av) in dbs.iter_mut().zip(dys).zip(as_) {
                    *xo = *xo + gv * av;
                }
            }
        }
    }
}

/// `y[b, c] += bias[b, c]` broadcast over spatial positions.
pub fn add_channel_bias_forward<T: Scalar>(
    x: &[T],
    bias: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    y: &mut [T],
) {
    for bi in 0..batch {
        for c in 0..channels {
            let bv = bias[bi * channels + c];
            let off = (bi * channels + c) * spatial;
            for (yo, &xv) in y[off..off + spatial].iter_mut().zip(&x[off..off + spatial]) {
                *yo = xv + bv;
            }
        }
    }
}

pub fn add_channel_bias_backward_bias<T: Scalar>(
    dy: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    dbias: &mut [T],
) {
    for bi in 0..batch {
        for c in 0..channels {
            let off = (bi * channels + c) * spatial;
            let mut acc = T::zero();
            for &gv in &dy[off..off + spatial] {
                acc = acc + gv;
            }
            let idx = bi * channels + c;
            dbias[idx] = dbias[idx] + acc;
        }
    }
}

pub fn concat_channels_forward<T: Scalar>(
    a: &[T],
    b: &[T],
    batch: usize,
    ca: usize,
    cb: usize,
    spatial: usize,
    y: &mut [T],
) {
    let (asz, bsz) = (ca * spatial, cb * spatial);
    for bi in 0..batch {
        let out = &mut y[bi * (asz + bsz)..(bi + 1) * (asz + bsz)];
        out[..asz].copy_from_slice(&a[bi * asz..(bi + 1) * asz]);
        out[asz..].copy_from_slice(&b[bi * bsz..(bi + 1) * bsz]);
    }
}

pub fn concat_channels_backward<T: Scalar>(
    dy: &[T],
    batch: usize,
    ca: usize,
    cb: usize,
    spatial: usize,
    mut da: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let (asz, bsz) = (ca * spatial, cb * spatial);
    for bi in 0..batch {
        let g = &dy[bi * (asz + bsz)..(bi + 1) * (asz + bsz)];
        if let Some(da) = da.as_deref_mut() {
            accumulate(&mut da[bi * asz..(bi + 1) * asz], &g[..asz]);
        }
        if let Some(db) = db.as_deref_mut() {
            accumulate(&mut db[bi * bsz..(bi + 1) * bsz], &g[asz..]);
        }
    }
}

/// Mean of squared differences over all elements.
pub fn mse_forward<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let mut acc = T::zero();
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        acc = acc + d * d;
    }
    acc / T::from_usize(pred.len())
}

/// Accumulates `g * 2 (pred - target) / n` into `dpred` and the negation
/// into `dtarget`.
pub fn mse_backward<T: Scalar>(
    g: T,
    pred: &[T],
    target: &[T],
    mut dpred: Option<&mut [T]>,
    mut dtarget: Option<&mut [T]>,
) {
    let scale = g * T::from_f64(2.0) / T::from_usize(pred.len());
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        let d = scale * (p - t);
        if let Some(dpred) = dpred.as_deref_mut() {
            dpred[i] = dpred[i] + d;
        }
        if let Some(dtarget) = dtarget.as_deref_mut() {
            dtarget[i] = dtarget[i] - d;
        }
    }
}

pub fn sum_all<T: Scalar>(x: &[T]) -> T {
    let mut acc = T::zero();
    for &v in x {
        acc = acc + v;
    }
    acc
}
