//! Deterministic reconstruction baselines and the categorical metric suite.
//!
//! Both baselines fill only unlabeled voxels — observed labels always pass
//! through. Metrics are confusion-matrix readouts with air excluded on the
//! truth side where noted, mirroring the reported table layout.

use crate::error::{CoreError, Result};
use crate::facies::{self, K};
use crate::volume::{CategoricalVolume, ConditionVolume, UNSAMPLED};

/// 9×9 counts; rows are ground truth, columns are prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn zeros() -> Self {
        Self {
            counts: [[0; K]; K],
        }
    }

    pub fn from_volumes(pred: &CategoricalVolume, truth: &CategoricalVolume) -> Result<Self> {
        if pred.dims != truth.dims {
            return Err(CoreError::Usage(format!(
                "dimension mismatch: pred {:?} vs truth {:?}",
                pred.dims, truth.dims
            )));
        }
        let mut m = Self::zeros();
        for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
            if !facies::is_valid(p) || !facies::is_valid(t) {
                return Err(CoreError::Data(format!("invalid label pair ({p}, {t})")));
            }
            m.counts[t as usize - 1][p as usize - 1] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Voxels whose ground truth is `cat`.
    pub fn row_sum(&self, cat: u8) -> u64 {
        self.counts[cat as usize - 1].iter().sum()
    }

    /// Voxels predicted as `cat`.
    pub fn col_sum(&self, cat: u8) -> u64 {
        self.counts.iter().map(|r| r[cat as usize - 1]).sum()
    }

    pub fn diag(&self, cat: u8) -> u64 {
        self.counts[cat as usize - 1][cat as usize - 1]
    }
}

/// Recall, IoU, and volumetric proportion for one category. Ratios are
/// `None` when their denominator is empty (category absent on the relevant
/// side).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryMetrics {
    pub category: u8,
    pub proportion: f64,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

/// Full metric suite for one prediction/truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub acc_incl_air: f64,
    /// Accuracy over voxels whose *truth* is not air; predicting air on rock
    /// counts against it.
    pub acc_excl_air: f64,
    /// Mean IoU over non-air categories present in the truth; absent
    /// categories are skipped, not scored 0.
    pub miou_excl_air: f64,
    pub per_category: Vec<CategoryMetrics>,
}

/// Confusion-matrix metrics with air excluded on the truth side where noted.
/// Errors if dims mismatch or the truth contains no non-air voxels (the
/// air-excluded ratios would be 0/0).
pub fn compute_metrics(
    pred: &CategoricalVolume,
    truth: &CategoricalVolume,
    air_id: u8,
) -> Result<MetricsReport> {
    if !facies::is_valid(air_id) {
        return Err(CoreError::Usage(format!("invalid air id {air_id}")));
    }
    let confusion = ConfusionMatrix::from_volumes(pred, truth)?;
    let total = confusion.total() as f64;
    let diag_total: u64 = facies::ALL.iter().map(|&c| confusion.diag(c)).sum();

    let mut non_air_total = 0u64;
    let mut non_air_correct = 0u64;
    let mut iou_sum = 0.0;
    let mut iou_n = 0usize;
    let mut per_category = Vec::with_capacity(K);
    for &cat in facies::ALL.iter() {
        let row = confusion.row_sum(cat);
        let col = confusion.col_sum(cat);
        let diag = confusion.diag(cat);
        if cat != air_id {
            non_air_total += row;
            non_air_correct += diag;
        }
        let recall = (row > 0).then(|| diag as f64 / row as f64);
        let union = row + col - diag;
        let iou = (union > 0).then(|| diag as f64 / union as f64);
        if cat != air_id && row > 0 {
            iou_sum += iou.unwrap_or(0.0);
            iou_n += 1;
        }
        per_category.push(CategoryMetrics {
            category: cat,
            proportion: row as f64 / total,
            recall,
            iou,
        });
    }
    if non_air_total == 0 {
        return Err(CoreError::Data(
            "truth contains no non-air voxels; air-excluded metrics undefined".into(),
        ));
    }
    Ok(MetricsReport {
        confusion,
        acc_incl_air: diag_total as f64 / total,
        acc_excl_air: non_air_correct as f64 / non_air_total as f64,
        miou_excl_air: iou_sum / iou_n as f64,
        per_category,
    })
}

/// Depth-wise majority baseline: per depth slice, the modal category among
/// labeled non-air voxels fills every unlabeled voxel; a voteless slice
/// inherits the nearest voting slice below it, else above; ties resolve to
/// the lowest category id. Falls back to the global majority over all labels
/// when no slice has subsurface votes; errors only on a label-free condition.
pub fn baseline_depthwise(cond: &ConditionVolume) -> Result<CategoricalVolume> {
    let dims = cond.dims;
    if cond.labeled_count() == 0 {
        return Err(CoreError::Data(
            "depth-wise baseline needs at least one labeled voxel".into(),
        ));
    }
    // Vote per slice over labeled non-air voxels.
    let mut votes = vec![[0u64; K]; dims.nz];
    let mut global = [0u64; K];
    for x in 0..dims.nx {
        for y in 0..dims.ny {
            for z in 0..dims.nz {
                let l = cond.get(x, y, z);
                if l == UNSAMPLED {
                    continue;
                }
                global[l as usize - 1] += 1;
                if l as u8 != facies::AIR {
                    votes[z][l as usize - 1] += 1;
                }
            }
        }
    }
    let majority = |v: &[u64; K]| -> Option<u8> {
        let (mut best, mut best_n) = (0usize, 0u64);
        for (i, &n) in v.iter().enumerate() {
            // strict > keeps the lowest id on ties
            if n > best_n {
                best_n = n;
                best = i;
            }
        }
        (best_n > 0).then_some(best as u8 + 1)
    };
    let slice_major: Vec<Option<u8>> = votes.iter().map(majority).collect();
    let global_major = majority(&global).expect("labeled_count > 0");
    let fill_for = |z: usize| -> u8 {
        if let Some(m) = slice_major[z] {
            return m;
        }
        // nearest voting slice below (deeper), else above
        for dz in z + 1..dims.nz {
            if let Some(m) = slice_major[dz] {
                return m;
            }
        }
        for dz in (0..z).rev() {
            if let Some(m) = slice_major[dz] {
                return m;
            }
        }
        global_major
    };
    let fill: Vec<u8> = (0..dims.nz).map(fill_for).collect();

    let mut labels = vec![0u8; dims.count()];
    for x in 0..dims.nx {
        for y in 0..dims.ny {
            let s = dims.column_start(x, y);
            for z in 0..dims.nz {
                let l = cond.labels[s + z];
                labels[s + z] = if l == UNSAMPLED { fill[z] } else { l as u8 };
            }
        }
    }
    Ok(CategoricalVolume { dims, labels })
}

/// Polygonal nearest-neighbor baseline: each unlabeled voxel copies the
/// same-depth label of the nearest borehole column (Euclidean X–Y distance,
/// ties to the smaller x then y). Errors without any borehole column.
pub fn baseline_polygonal(cond: &ConditionVolume) -> Result<CategoricalVolume> {
    let dims = cond.dims;
    if cond.borehole_columns.is_empty() {
        return Err(CoreError::Data(
            "polygonal baseline needs at least one borehole column".into(),
        ));
    }
    for &(hx, hy) in &cond.borehole_columns {
        let s = dims.column_start(hx, hy);
        if cond.labels[s..s + dims.nz].iter().any(|&l| l == UNSAMPLED) {
            return Err(CoreError::Data(format!(
                "borehole column ({hx}, {hy}) is not fully labeled"
            )));
        }
    }
    let mut labels = vec![0u8; dims.count()];
    for x in 0..dims.nx {
        for y in 0..dims.ny {
            // Nearest hole; borehole_columns is ascending (x, y), so the
            // first strict improvement keeps the smallest tied coordinate.
            let (mut best, mut best_d) = ((0usize, 0usize), u64::MAX);
            for &(hx, hy) in &cond.borehole_columns {
                let dx = x as i64 - hx as i64;
                let dy = y as i64 - hy as i64;
                let d = (dx * dx + dy * dy) as u64;
                if d < best_d {
                    best_d = d;
                    best = (hx, hy);
                }
            }
            let donor = dims.column_start(best.0, best.1);
            let s = dims.column_start(x, y);
            for z in 0..dims.nz {
                let l = cond.labels[s + z];
                labels[s + z] = if l == UNSAMPLED {
                    cond.labels[donor + z] as u8
                } else {
                    l as u8
                };
            }
        }
    }
    Ok(CategoricalVolume { dims, labels })
}
