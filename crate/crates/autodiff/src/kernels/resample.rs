//! Fixed resampling: stride-2 decimation and nearest-neighbor ×2 upsampling.

use crate::scalar::Scalar;

/// Keep every second voxel along each spatial axis (even indices).
pub fn downsample_forward<T: Scalar>(
    x: &[T],
    bc: usize,
    d: usize,
    h: usize,
    w: usize,
    y: &mut [T],
) {
    let (od, oh, ow) = (d.div_ceil(2), h.div_ceil(2), w.div_ceil(2));
    for n in 0..bc {
        let xc = &x[n * d * h * w..][..d * h * w];
        let yc = &mut y[n * od * oh * ow..][..od * oh * ow];
        for zd in 0..od {
            for zh in 0..oh {
                let x_row = &xc[(zd * 2 * h + zh * 2) * w..][..w];
                let y_row = &mut yc[(zd * oh + zh) * ow..][..ow];
                for (zw, yo) in y_row.iter_mut().enumerate() {
                    *yo = x_row[zw * 2];
                }
            }
        }
    }
}

pub fn downsample_backward<T: Scalar>(
    dy: &[T],
    bc: usize,
    d: usize,
    h: usize,
    w: usize,
    dx: &mut [T],
) {
    let (od, oh, ow) = (d.div_ceil(2), h.div_ceil(2), w.div_ceil(2));
    for n in 0..bc {
        let gc = &dy[n * od * oh * ow..][..od * oh * ow];
        let xc = &mut dx[n * d * h * w..][..d * h * w];
        for zd in 0..od {
            for zh in 0..oh {
                let g_row = &gc[(zd * oh + zh) * ow..][..ow];
                let x_row = &mut xc[(zd * 2 * h + zh * 2) * w..][..w];
                for (zw, &gv) in g_row.iter().enumerate() {
                    x_row[zw * 2] = x_row[zw * 2] + gv;
                }
            }
        }
    }
}

/// Repeat every voxel 2× along each spatial axis.
pub fn upsample_forward<T: Scalar>(x: &[T], bc: usize, d: usize, h: usize, w: usize, y: &mut [T]) {
    let (od, oh, ow) = (d * 2, h * 2, w * 2);
    for n in 0..bc {
        let xc = &x[n * d * h * w..][..d * h * w];
        let yc = &mut y[n * od * oh * ow..][..od * oh * ow];
        for zd in 0..od {
            for zh in 0..oh {
                let x_row = &xc[((zd / 2) * h + zh / 2) * w..][..w];
                let y_row = &mut yc[(zd * oh + zh) * ow..][..ow];
                for (zw, yo) in y_row.iter_mut().enumerate() {
                    *yo = x_row[zw / 2];
                }
            }
        }
    }
}

pub fn upsample_backward<T: Scalar>(
    dy: &[T],
    bc: usize,
    d: usize,
    h: usize,
    w: usize,
    dx: &mut [T],
) {
    let (od, oh, ow) = (d * 2, h * 2, w * 2);
    for n in 0..bc {
        let gc = &dy[n * od * oh * ow..][..od * oh * ow];
        let xc = &mut dx[n * d * h * w..][..d * h * w];
        for zd in 0..od {
            for zh in 0..oh {
                let g_row = &gc[(zd * oh + zh) * ow..][..ow];
                let x_row = &mut xc[((zd / 2) * h + zh / 2) * w..][..w];
                for (zw, &gv) in g_row.iter().enumerate() {
                    x_row[zw / 2] = x_row[zw / 2] + gv;
                }
            }
        }
    }
}
