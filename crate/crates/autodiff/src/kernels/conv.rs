//! 3D convolution with cubic kernels, zero padding and isotropic stride.
//!
//! Each input channel is copied into a zero-padded scratch volume first, so
//! the hot loops are dense, bounds-free row operations. The k=3/stride-1 row
//! bodies are monomorphized per row width (the extents the nets actually use)
//! so LLVM fully unrolls and vectorizes them; everything else takes a generic
//! fallback. Iteration order is fixed, which keeps reductions
//! bit-reproducible from run to run.

use crate::scalar::Scalar;

/// Resolved geometry for one convolution call.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_d: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_d: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    #[inline]
    fn padded(&self) -> (usize, usize, usize) {
        (
            self.in_d + 2 * self.padding,
            self.in_h + 2 * self.padding,
            self.in_w + 2 * self.padding,
        )
    }
}

/// Output extent along one axis, or `None` if the kernel does not fit.
pub fn out_extent(n: usize, k: usize, padding: usize, stride: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Copy one `[n_d, n_h, n_w]` channel into the interior of a zeroed buffer
/// padded by `pad` on every side. Only the interior is written, so a reused
/// buffer keeps valid zero borders.
fn pad_channel<T: Scalar>(
    src: &[T],
    (n_d, n_h, n_w): (usize, usize, usize),
    pad: usize,
    dst: &mut [T],
) {
    let (ph, pw) = (n_h + 2 * pad, n_w + 2 * pad);
    for iz in 0..n_d {
        for iy in 0..n_h {
            let s = &src[(iz * n_h + iy) * n_w..][..n_w];
            let t = &mut dst[((iz + pad) * ph + iy + pad) * pw + pad..][..n_w];
            t.copy_from_slice(s);
        }
    }
}

/// Width-specialized k=3/stride-1 correlation of one `(kz, ky)` tap row over
/// a whole output channel: `y[od, oh, i] += sum_kx w[kx] * xp[iz, iy, i+kx]`.
#[inline(always)]
fn corr_rows_k3s1<T: Scalar, const N: usize>(
    y: &mut [T],
    (n_d, n_h): (usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    w_row: &[T],
    (kz, ky): (usize, usize),
) {
    let (w0, w1, w2) = (w_row[0], w_row[1], w_row[2]);
    for od in 0..n_d {
        let iz = od + kz;
        for oh in 0..n_h {
            let iy = oh + ky;
            let xr = &xp[(iz * ph + iy) * pw..];
            let x0 = &xr[..N];
            let x1 = &xr[1..N + 1];
            let x2 = &xr[2..N + 2];
            let yr = &mut y[(od * n_h + oh) * N..][..N];
            for i in 0..N {
                yr[i] = yr[i] + w0 * x0[i] + w1 * x1[i] + w2 * x2[i];
            }
        }
    }
}

/// Width-specialized k=3/stride-2 correlation of one `(kz, ky)` tap row:
/// `y[od, oh, i] += sum_kx w[kx] * xp[iz, iy, 2i+kx]`.
#[inline(always)]
fn corr_rows_k3s2<T: Scalar, const N: usize>(
    y: &mut [T],
    (n_d, n_h): (usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    w_row: &[T],
    (kz, ky): (usize, usize),
) {
    let (w0, w1, w2) = (w_row[0], w_row[1], w_row[2]);
    for od in 0..n_d {
        let iz = od * 2 + kz;
        for oh in 0..n_h {
            let iy = oh * 2 + ky;
            let xr = &xp[(iz * ph + iy) * pw..][..2 * N + 1];
            let yr = &mut y[(od * n_h + oh) * N..][..N];
            for i in 0..N {
                yr[i] = yr[i] + w0 * xr[2 * i] + w1 * xr[2 * i + 1] + w2 * xr[2 * i + 2];
            }
        }
    }
}

/// Generic correlation for any kernel width and stride.
#[inline(always)]
fn corr_rows_any<T: Scalar>(
    y: &mut [T],
    (n_d, n_h, n_w): (usize, usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    w_row: &[T],
    (kz, ky): (usize, usize),
    stride: usize,
) {
    for od in 0..n_d {
        let iz = od * stride + kz;
        for oh in 0..n_h {
            let iy = oh * stride + ky;
            let xr = &xp[(iz * ph + iy) * pw..][..pw];
            let yr = &mut y[(od * n_h + oh) * n_w..][..n_w];
            if stride == 1 {
                for (kx, &wv) in w_row.iter().enumerate() {
                    let xk = &xr[kx..kx + n_w];
                    for i in 0..n_w {
                        yr[i] = yr[i] + wv * xk[i];
                    }
                }
            } else {
                for (kx, &wv) in w_row.iter().enumerate() {
                    for i in 0..n_w {
                        yr[i] = yr[i] + wv * xr[i * stride + kx];
                    }
                }
            }
        }
    }
}

/// Correlate one `(kz, ky)` tap row over a whole channel, dispatching on row
/// width.
#[inline(always)]
fn corr_block<T: Scalar>(
    y: &mut [T],
    yd: (usize, usize, usize),
    xp: &[T],
    pp: (usize, usize),
    w_row: &[T],
    kk: (usize, usize),
    stride: usize,
) {
    if w_row.len() == 3 && stride == 1 {
        let dh = (yd.0, yd.1);
        match yd.2 {
            4 => return corr_rows_k3s1::<T, 4>(y, dh, xp, pp, w_row, kk),
            8 => return corr_rows_k3s1::<T, 8>(y, dh, xp, pp, w_row, kk),
            16 => return corr_rows_k3s1::<T, 16>(y, dh, xp, pp, w_row, kk),
            32 => return corr_rows_k3s1::<T, 32>(y, dh, xp, pp, w_row, kk),
            64 => return corr_rows_k3s1::<T, 64>(y, dh, xp, pp, w_row, kk),
            _ => {}
        }
    }
    if w_row.len() == 3 && stride == 2 {
        let dh = (yd.0, yd.1);
        match yd.2 {
            4 => return corr_rows_k3s2::<T, 4>(y, dh, xp, pp, w_row, kk),
            8 => return corr_rows_k3s2::<T, 8>(y, dh, xp, pp, w_row, kk),
            16 => return corr_rows_k3s2::<T, 16>(y, dh, xp, pp, w_row, kk),
            32 => return corr_rows_k3s2::<T, 32>(y, dh, xp, pp, w_row, kk),
            _ => {}
        }
    }
    corr_rows_any(y, yd, xp, pp, w_row, kk, stride);
}

/// Width-specialized k=3/stride-1 tap-row dot accumulation:
/// `vacc[kx*N + i] += sum_rows gy[row, i] * xp[row', i + kx]`. Local
/// fixed-size accumulators stay in registers across the row loop.
#[inline(always)]
fn dot_rows_k3s1<T: Scalar, const N: usize>(
    vacc: &mut [T],
    dy_c: &[T],
    (n_d, n_h): (usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    (kz, ky): (usize, usize),
) {
    let mut v0 = [T::zero(); N];
    let mut v1 = [T::zero(); N];
    let mut v2 = [T::zero(); N];
    for od in 0..n_d {
        let iz = od + kz;
        for oh in 0..n_h {
            let iy = oh + ky;
            let gy = &dy_c[(od * n_h + oh) * N..][..N];
            let xr = &xp[(iz * ph + iy) * pw..];
            let x0 = &xr[..N];
            let x1 = &xr[1..N + 1];
            let x2 = &xr[2..N + 2];
            for i in 0..N {
                let g = gy[i];
                v0[i] = v0[i] + g * x0[i];
                v1[i] = v1[i] + g * x1[i];
                v2[i] = v2[i] + g * x2[i];
            }
        }
    }
    for i in 0..N {
        vacc[i] = vacc[i] + v0[i];
        vacc[N + i] = vacc[N + i] + v1[i];
        vacc[2 * N + i] = vacc[2 * N + i] + v2[i];
    }
}

/// Width-specialized k=3/stride-2 tap-row dot accumulation.
#[inline(always)]
fn dot_rows_k3s2<T: Scalar, const N: usize>(
    vacc: &mut [T],
    dy_c: &[T],
    (n_d, n_h): (usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    (kz, ky): (usize, usize),
) {
    let mut v0 = [T::zero(); N];
    let mut v1 = [T::zero(); N];
    let mut v2 = [T::zero(); N];
    for od in 0..n_d {
        let iz = od * 2 + kz;
        for oh in 0..n_h {
            let iy = oh * 2 + ky;
            let gy = &dy_c[(od * n_h + oh) * N..][..N];
            let xr = &xp[(iz * ph + iy) * pw..][..2 * N + 1];
            for i in 0..N {
                let g = gy[i];
                v0[i] = v0[i] + g * xr[2 * i];
                v1[i] = v1[i] + g * xr[2 * i + 1];
                v2[i] = v2[i] + g * xr[2 * i + 2];
            }
        }
    }
    for i in 0..N {
        vacc[i] = vacc[i] + v0[i];
        vacc[N + i] = vacc[N + i] + v1[i];
        vacc[2 * N + i] = vacc[2 * N + i] + v2[i];
    }
}

/// Generic tap-row dot accumulation for any kernel width and stride.
#[inline(always)]
fn dot_rows_any<T: Scalar>(
    vacc: &mut [T],
    dy_c: &[T],
    (n_d, n_h, n_w): (usize, usize, usize),
    xp: &[T],
    (ph, pw): (usize, usize),
    (kz, ky): (usize, usize),
    k: usize,
    stride: usize,
) {
    for kx in 0..k {
        let vk = &mut vacc[kx * n_w..][..n_w];
        for od in 0..n_d {
            let iz = od * stride + kz;
            for oh in 0..n_h {
                let iy = oh * stride + ky;
                let gy = &dy_c[(od * n_h + oh) * n_w..][..n_w];
                let xr = &xp[(iz * ph + iy) * pw..][..pw];
                for (i, &gv) in gy.iter().enumerate() {
                    vk[i] = vk[i] + gv * xr[i * stride + kx];
                }
            }
        }
    }
}

/// Tap-row dot over a whole channel pair, dispatching on row width.
#[inline(always)]
fn dot_block<T: Scalar>(
    vacc: &mut [T],
    dy_c: &[T],
    yd: (usize, usize, usize),
    xp: &[T],
    pp: (usize, usize),
    kk: (usize, usize),
    k: usize,
    stride: usize,
) {
    if k == 3 && stride == 1 {
        let dh = (yd.0, yd.1);
        match yd.2 {
            4 => return dot_rows_k3s1::<T, 4>(vacc, dy_c, dh, xp, pp, kk),
            8 => return dot_rows_k3s1::<T, 8>(vacc, dy_c, dh, xp, pp, kk),
            16 => return dot_rows_k3s1::<T, 16>(vacc, dy_c, dh, xp, pp, kk),
            32 => return dot_rows_k3s1::<T, 32>(vacc, dy_c, dh, xp, pp, kk),
            64 => return dot_rows_k3s1::<T, 64>(vacc, dy_c, dh, xp, pp, kk),
            _ => {}
        }
    }
    if k == 3 && stride == 2 {
        let dh = (yd.0, yd.1);
        match yd.2 {
            4 => return dot_rows_k3s2::<T, 4>(vacc, dy_c, dh, xp, pp, kk),
            8 => return dot_rows_k3s2::<T, 8>(vacc, dy_c, dh, xp, pp, kk),
            16 => return dot_rows_k3s2::<T, 16>(vacc, dy_c, dh, xp, pp, kk),
            32 => return dot_rows_k3s2::<T, 32>(vacc, dy_c, dh, xp, pp, kk),
            _ => {}
        }
    }
    dot_rows_any(vacc, dy_c, yd, xp, pp, kk, k, stride);
}

/// `gp[ow*stride + kx] += w[kx] * gy[ow]` over one padded input row.
#[inline(always)]
fn row_taps_scatter<T: Scalar>(gp: &mut [T], gy: &[T], w: &[T], stride: usize) {
    let n = gy.len();
    if stride == 1 {
        for (kx, &wv) in w.iter().enumerate() {
            for (go, &gv) in gp[kx..kx + n].iter_mut().zip(gy) {
                *go = *go + wv * gv;
            }
        }
    } else {
        for (kx, &wv) in w.iter().enumerate() {
            for (i, &gv) in gy.iter().enumerate() {
                let j = i * stride + kx;
                gp[j] = gp[j] + wv * gv;
            }
        }
    }
}

#[inline(never)]
pub fn forward<T: Scalar>(x: &[T], w: &[T], b: &[T], d: &ConvDims, y: &mut [T]) {
    let (pd, ph, pw) = d.padded();
    let p_chw = pd * ph * pw;
    let in_chw = d.in_d * d.in_h * d.in_w;
    let out_hw = d.out_h * d.out_w;
    let out_chw = d.c_out * d.out_d * out_hw;
    let kk3 = d.k * d.k * d.k;
    let out_dims = (d.out_d, d.out_h, d.out_w);
    let mut xp = vec![T::zero(); d.c_in * p_chw];
    for bi in 0..d.batch {
        for ci in 0..d.c_in {
            pad_channel(
                &x[(bi * d.c_in + ci) * in_chw..][..in_chw],
                (d.in_d, d.in_h, d.in_w),
                d.padding,
                &mut xp[ci * p_chw..][..p_chw],
            );
        }
        for co in 0..d.c_out {
            let y_c = &mut y[bi * out_chw + co * d.out_d * out_hw..][..d.out_d * out_hw];
            y_c.fill(b[co]);
            for ci in 0..d.c_in {
                let x_c = &xp[ci * p_chw..][..p_chw];
                let w_cc = &w[(co * d.c_in + ci) * kk3..][..kk3];
                for kz in 0..d.k {
                    for ky in 0..d.k {
                        let w_row = &w_cc[(kz * d.k + ky) * d.k..][..d.k];
                        corr_block(y_c, out_dims, x_c, (ph, pw), w_row, (kz, ky), d.stride);
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the input; accumulates into `dx`.
///
/// For stride 1 this runs as a forward-style correlation of the padded output
/// gradient with the flipped, transposed kernel — same dense row loops as
/// [`forward`], no overlapping writes. Strided convolutions fall back to a
/// scatter into a padded buffer.
#[inline(never)]
pub fn backward_input<T: Scalar>(dy: &[T], w: &[T], d: &ConvDims, dx: &mut [T]) {
    if d.stride == 1 && d.k > d.padding {
        return backward_input_transposed(dy, w, d, dx);
    }
    let (pd, ph, pw) = d.padded();
    let p_chw = pd * ph * pw;
    let in_hw = d.in_h * d.in_w;
    let out_hw = d.out_h * d.out_w;
    let kk3 = d.k * d.k * d.k;
    let mut gp = vec![T::zero(); p_chw];
    for bi in 0..d.batch {
        for ci in 0..d.c_in {
            gp.fill(T::zero());
            for co in 0..d.c_out {
                let dy_c = &dy[bi * (d.c_out * d.out_d * out_hw) + co * d.out_d * out_hw..]
                    [..d.out_d * out_hw];
                let w_cc = &w[(co * d.c_in + ci) * kk3..][..kk3];
                for kz in 0..d.k {
                    for ky in 0..d.k {
                        let w_row = &w_cc[(kz * d.k + ky) * d.k..][..d.k];
                        for od in 0..d.out_d {
                            let iz = od * d.stride + kz;
                            for oh in 0..d.out_h {
                                let iy = oh * d.stride + ky;
                                let gp_row = &mut gp[(iz * ph + iy) * pw..][..pw];
                                let dy_row = &dy_c[(od * d.out_h + oh) * d.out_w..][..d.out_w];
                                row_taps_scatter(gp_row, dy_row, w_row, d.stride);
                            }
                        }
                    }
                }
            }
            let dx_c = &mut dx[bi * (d.c_in * d.in_d * in_hw) + ci * d.in_d * in_hw..]
                [..d.in_d * in_hw];
            for iz in 0..d.in_d {
                for iy in 0..d.in_h {
                    let s = &gp[((iz + d.padding) * ph + iy + d.padding) * pw + d.padding..]
                        [..d.in_w];
                    let t = &mut dx_c[(iz * d.in_h + iy) * d.in_w..][..d.in_w];
                    for (to, &sv) in t.iter_mut().zip(s) {
                        *to = *to + sv;
                    }
                }
            }
        }
    }
}

/// Stride-1 input gradient: `dx[ci] += sum_co flip(w[co,ci]) * pad(dy[co])`
/// with padding `k - 1 - padding`, which lands exactly on the input extents.
fn backward_input_transposed<T: Scalar>(dy: &[T], w: &[T], d: &ConvDims, dx: &mut [T]) {
    let pad_t = d.k - 1 - d.padding;
    let (qd, qh, qw) = (d.out_d + 2 * pad_t, d.out_h + 2 * pad_t, d.out_w + 2 * pad_t);
    let q_chw = qd * qh * qw;
    let in_hw = d.in_h * d.in_w;
    let in_dims = (d.in_d, d.in_h, d.in_w);
    let out_chw = d.out_d * d.out_h * d.out_w;
    let kk3 = d.k * d.k * d.k;
    // wf[ci, co, tap] = w[co, ci, flipped tap]
    let mut wf = vec![T::zero(); w.len()];
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            let src = &w[(co * d.c_in + ci) * kk3..][..kk3];
            let dst = &mut wf[(ci * d.c_out + co) * kk3..][..kk3];
            for (t, slot) in dst.iter_mut().enumerate() {
                *slot = src[kk3 - 1 - t];
            }
        }
    }
    let mut dyp = vec![T::zero(); d.c_out * q_chw];
    for bi in 0..d.batch {
        for co in 0..d.c_out {
            pad_channel(
                &dy[(bi * d.c_out + co) * out_chw..][..out_chw],
                (d.out_d, d.out_h, d.out_w),
                pad_t,
                &mut dyp[co * q_chw..][..q_chw],
            );
        }
        for ci in 0..d.c_in {
            let dx_c = &mut dx[bi * (d.c_in * d.in_d * in_hw) + ci * d.in_d * in_hw..]
                [..d.in_d * in_hw];
            for co in 0..d.c_out {
                let dyp_c = &dyp[co * q_chw..][..q_chw];
                let w_cc = &wf[(ci * d.c_out + co) * kk3..][..kk3];
                for kz in 0..d.k {
                    for ky in 0..d.k {
                        let w_row = &w_cc[(kz * d.k + ky) * d.k..][..d.k];
                        corr_block(dx_c, in_dims, dyp_c, (qh, qw), w_row, (kz, ky), 1);
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the weights; accumulates into `dw`.
#[inline(never)]
pub fn backward_weight<T: Scalar>(dy: &[T], x: &[T], d: &ConvDims, dw: &mut [T]) {
    let (pd, ph, pw) = d.padded();
    let p_chw = pd * ph * pw;
    let in_chw = d.in_d * d.in_h * d.in_w;
    let out_hw = d.out_h * d.out_w;
    let out_dims = (d.out_d, d.out_h, d.out_w);
    let kk3 = d.k * d.k * d.k;
    let mut xp = vec![T::zero(); d.c_in * p_chw];
    let mut vacc = vec![T::zero(); d.k * d.out_w];
    for bi in 0..d.batch {
        for ci in 0..d.c_in {
            pad_channel(
                &x[(bi * d.c_in + ci) * in_chw..][..in_chw],
                (d.in_d, d.in_h, d.in_w),
                d.padding,
                &mut xp[ci * p_chw..][..p_chw],
            );
        }
        for co in 0..d.c_out {
            let dy_c = &dy[bi * (d.c_out * d.out_d * out_hw) + co * d.out_d * out_hw..]
                [..d.out_d * out_hw];
            for ci in 0..d.c_in {
                let x_c = &xp[ci * p_chw..][..p_chw];
                let dw_cc = &mut dw[(co * d.c_in + ci) * kk3..][..kk3];
                for kz in 0..d.k {
                    for ky in 0..d.k {
                        vacc.fill(T::zero());
                        dot_block(
                            &mut vacc,
                            dy_c,
                            out_dims,
                            x_c,
                            (ph, pw),
                            (kz, ky),
                            d.k,
                            d.stride,
                        );
                        let base = (kz * d.k + ky) * d.k;
                        for kx in 0..d.k {
                            let mut a = T::zero();
                            for &v in &vacc[kx * d.out_w..][..d.out_w] {
                                a = a + v;
                            }
                            dw_cc[base + kx] = dw_cc[base + kx] + a;
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the bias; accumulates into `db`.
#[inline(never)]
pub fn backward_bias<T: Scalar>(dy: &[T], d: &ConvDims, db: &mut [T]) {
    let out_dhw = d.out_d * d.out_h * d.out_w;
    for bi in 0..d.batch {
        for co in 0..d.c_out {
            let dy_c = &dy[(bi * d.c_out + co) * out_dhw..][..out_dhw];
            let mut acc = T::zero();
            for &g in dy_c {
                acc = acc + g;
            }
            db[co] = db[co] + acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_extent_matches_formula() {
        assert_eq!(out_extent(8, 3, 1, 1), Some(8));
        assert_eq!(out_extent(8, 3, 1, 2), Some(4));
        assert_eq!(out_extent(8, 1, 0, 1), Some(8));
        assert_eq!(out_extent(2, 5, 1, 1), None);
    }

    /// Reference forward with explicit bounds checks, for cross-validation.
    fn forward_naive(x: &[f64], w: &[f64], b: &[f64], d: &ConvDims, y: &mut [f64]) {
        let in_hw = d.in_h * d.in_w;
        let out_hw = d.out_h * d.out_w;
        for bi in 0..d.batch {
            for co in 0..d.c_out {
                for od in 0..d.out_d {
                    for oh in 0..d.out_h {
                        for ow in 0..d.out_w {
                            let mut acc = b[co];
                            for ci in 0..d.c_in {
                                for kz in 0..d.k {
                                    let iz = (od * d.stride + kz) as isize - d.padding as isize;
                                    if iz < 0 || iz >= d.in_d as isize {
                                        continue;
                                    }
                                    for ky in 0..d.k {
                                        let iy =
                                            (oh * d.stride + ky) as isize - d.padding as isize;
                                        if iy < 0 || iy >= d.in_h as isize {
                                            continue;
                                        }
                                        for kx in 0..d.k {
                                            let ix = (ow * d.stride + kx) as isize
                                                - d.padding as isize;
                                            if ix < 0 || ix >= d.in_w as isize {
                                                continue;
                                            }
                                            let xi = bi * (d.c_in * d.in_d * in_hw)
                                                + ci * d.in_d * in_hw
                                                + iz as usize * in_hw
                                                + iy as usize * d.in_w
                                                + ix as usize;
                                            let wi = ((co * d.c_in + ci) * d.k + kz) * d.k * d.k
                                                + ky * d.k
                                                + kx;
                                            acc += x[xi] * w[wi];
                                        }
                                    }
                                }
                            }
                            y[bi * (d.c_out * d.out_d * out_hw)
                                + co * d.out_d * out_hw
                                + od * out_hw
                                + oh * d.out_w
                                + ow] = acc;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn padded_forward_matches_naive() {
        // exercise the width-specialized bodies (n=4, 8) and the generic ones
        for &(k, stride, padding, n) in &[
            (3usize, 1usize, 1usize, 4usize),
            (3, 1, 1, 8),
            (3, 1, 1, 5),
            (3, 2, 1, 6),
            (1, 1, 0, 4),
            (3, 1, 0, 5),
        ] {
            let out_n = out_extent(n, k, padding, stride).unwrap();
            let d = ConvDims {
                batch: 2,
                c_in: 3,
                c_out: 2,
                k,
                stride,
                padding,
                in_d: n,
                in_h: n,
                in_w: n,
                out_d: out_n,
                out_h: out_n,
                out_w: out_n,
            };
            let mut state = 1u64;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            let x: Vec<f64> = (0..d.batch * d.c_in * n * n * n).map(|_| next()).collect();
            let w: Vec<f64> = (0..d.c_out * d.c_in * k * k * k).map(|_| next()).collect();
            let b: Vec<f64> = (0..d.c_out).map(|_| next()).collect();
            let ylen = d.batch * d.c_out * out_n * out_n * out_n;
            let mut y = vec![0.0; ylen];
            let mut y_ref = vec![0.0; ylen];
            forward(&x, &w, &b, &d, &mut y);
            forward_naive(&x, &w, &b, &d, &mut y_ref);
            for (a, r) in y.iter().zip(&y_ref) {
                assert!((a - r).abs() < 1e-12, "k={k} s={stride} p={padding}: {a} vs {r}");
            }
        }
    }
}
