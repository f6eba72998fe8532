//! Dense layer `y = x W + b` over `[batch, features]` matrices.

use crate::scalar::Scalar;

pub fn forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    batch: usize,
    in_f: usize,
    out_f: usize,
    y: &mut [T],
) {
    for bi in 0..batch {
        let xr = &x[bi * in_f..(bi + 1) * in_f];
        let yr = &mut y[bi * out_f..(bi + 1) * out_f];
        yr.copy_from_slice(&b[..out_f]);
        for (i, &xv) in xr.iter().enumerate() {
            let wr = &w[i * out_f..(i + 1) * out_f];
            for (yo, &wv) in yr.iter_mut().zip(wr) {
                *yo = *yo + xv * wv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    batch: usize,
    in_f: usize,
    out_f: usize,
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    for bi in 0..batch {
        let dyr = &dy[bi * out_f..(bi + 1) * out_f];
        let xr = &x[bi * in_f..(bi + 1) * in_f];
        if let Some(dx) = dx.as_deref_mut() {
            let dxr = &mut dx[bi * in_f..(bi + 1) * in_f];
            for (i, xo) in dxr.iter_mut().enumerate() {
                let wr = &w[i * out_f..(i + 1) * out_f];
                let mut acc = T::zero();
                for (&gv, &wv) in dyr.iter().zip(wr) {
                    acc = acc + gv * wv;
                }
                *xo = *xo + acc;
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            for (i, &xv) in xr.iter().enumerate() {
                let dwr = &mut dw[i * out_f..(i + 1) * out_f];
                for (wo, &gv) in dwr.iter_mut().zip(dyr) {
                    *wo = *wo + xv * gv;
                }
            }
        }
        if let Some(db) = db.as_deref_mut() {
            for (bo, &gv) in db[..out_f].iter_mut().zip(dyr) {
                *bo = *bo + gv;
            }
        }
    }
}
