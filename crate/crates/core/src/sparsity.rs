//! Sparse conditioning extraction and the categorical ↔ continuous mapping.
//!
//! Conditions mimic a real survey: the ground surface and the air above it
//! are observed everywhere, while the subsurface is known only along full
//! vertical traces at randomly drilled columns. Categorical volumes embed as
//! a signed one-hot stack in {−1, +1} so generative paths operate in a
//! continuous space; `decode` is the exact inverse on embedded volumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::facies::{self, K};
use crate::volume::{CategoricalVolume, ConditionVolume, ContinuousVolume, GridDims, UNSAMPLED};

/// Extract a sparse condition: air and the surface layer everywhere, plus
/// `n_holes` distinct fully-labeled columns. Deterministic in `seed`.
pub fn sample_sparse(
    vol: &CategoricalVolume,
    n_holes: usize,
    seed: u64,
) -> Result<ConditionVolume> {
    let dims = vol.dims;
    let n_cols = dims.columns();
    if n_holes > n_cols {
        return Err(CoreError::Usage(format!(
            "asked for {n_holes} boreholes on a grid with {n_cols} columns"
        )));
    }
    let mut cond = ConditionVolume::unsampled(dims);

    // Air is visible everywhere; the topmost rock voxel is the mapped surface.
    for x in 0..dims.nx {
        for y in 0..dims.ny {
            let s = dims.column_start(x, y);
            let col = vol.column(x, y);
            for (z, &l) in col.iter().enumerate() {
                if l == facies::AIR {
                    cond.labels[s + z] = facies::AIR as i8;
                } else {
                    cond.labels[s + z] = l as i8;
                    break; // surface layer reached; deeper voxels stay hidden
                }
            }
        }
    }

    // Partial Fisher-Yates over column indices: the first n_holes entries
    // are a uniform sample without replacement.
    let mut order: Vec<usize> = (0..n_cols).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_holes {
        let j = rng.gen_range(i..n_cols);
        order.swap(i, j);
    }
    let mut picked = order[..n_holes].to_vec();
    picked.sort_unstable();

    for &col_idx in &picked {
        let (x, y) = (col_idx / dims.ny, col_idx % dims.ny);
        let s = dims.column_start(x, y);
        for (z, &l) in vol.column(x, y).iter().enumerate() {
            cond.labels[s + z] = l as i8;
        }
        cond.borehole_columns.push((x, y));
    }
    cond.validate()?;
    Ok(cond)
}

/// Signed one-hot embedding: channel k−1 is +1 where the label is k, else −1.
pub fn embed(vol: &CategoricalVolume) -> Result<ContinuousVolume> {
    let n = vol.dims.count();
    let mut data = vec![-1.0f32; K * n];
    for (i, &l) in vol.labels.iter().enumerate() {
        if !facies::is_valid(l) {
            return Err(CoreError::Data(format!("invalid label {l} at voxel {i}")));
        }
        data[(l as usize - 1) * n + i] = 1.0;
    }
    ContinuousVolume::from_data(vol.dims, K, data)
}

/// Per-voxel argmax readout; ties resolve to the lowest category id. The
/// result is raw network output, so it is not required to satisfy the
/// air-above-ground rule.
pub fn decode(cv: &ContinuousVolume) -> Result<CategoricalVolume> {
    if cv.channels != K {
        return Err(CoreError::Usage(format!(
            "decode wants {K} channels, got {}",
            cv.channels
        )));
    }
    let n = cv.dims.count();
    let mut labels = vec![1u8; n];
    let mut best = cv.data[..n].to_vec();
    for c in 1..K {
        let plane = &cv.data[c * n..(c + 1) * n];
        for i in 0..n {
            // strict > keeps the lowest channel on ties
            if plane[i] > best[i] {
                best[i] = plane[i];
                labels[i] = c as u8 + 1;
            }
        }
    }
    Ok(CategoricalVolume {
        dims: cv.dims,
        labels,
    })
}

/// Network encoding of a condition: channels 0..K−1 carry the signed one-hot
/// where labeled and 0 where masked; the final channel is the known-mask
/// (1 labeled, 0 masked).
pub fn condition_channels(cond: &ConditionVolume) -> ContinuousVolume {
    let n = cond.dims.count();
    let mut out = ContinuousVolume::zeros(cond.dims, K + 1);
    for (i, &l) in cond.labels.iter().enumerate() {
        if l == UNSAMPLED {
            continue;
        }
        let base = (l as usize - 1) * n;
        for c in 0..K {
            out.data[c * n + i] = -1.0;
        }
        out.data[base + i] = 1.0;
        out.data[K * n + i] = 1.0;
    }
    out
}

/// Number of distinct labeled columns a condition could support — helper for
/// tests and dataset assembly.
pub fn max_holes(dims: GridDims) -> usize {
    dims.columns()
}
