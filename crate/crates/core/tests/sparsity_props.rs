//! Property tests for the categorical ↔ continuous mapping and sparse
//! condition extraction.

use proptest::prelude::*;
use stratagen_core::geostory::{realize, sample_story, ParamRanges};
use stratagen_core::sparsity::{condition_channels, decode, embed, sample_sparse};
use stratagen_core::volume::UNSAMPLED;
use stratagen_core::{CategoricalVolume, GridDims};

proptest! {
    #[test]
    fn embed_decode_roundtrip_on_arbitrary_volumes(
        labels in proptest::collection::vec(1u8..=9, 4 * 3 * 5),
    ) {
        let dims = GridDims::new(4, 3, 5);
        let vol = CategoricalVolume { dims, labels };
        let cv = embed(&vol).unwrap();
        prop_assert_eq!(decode(&cv).unwrap(), vol);
    }

    #[test]
    fn embed_has_single_positive_channel(
        labels in proptest::collection::vec(1u8..=9, 27),
    ) {
        let dims = GridDims::cube(3);
        let vol = CategoricalVolume { dims, labels };
        let cv = embed(&vol).unwrap();
        let n = dims.count();
        for i in 0..n {
            let pos = (0..9).filter(|&c| cv.data[c * n + i] == 1.0).count();
            let neg = (0..9).filter(|&c| cv.data[c * n + i] == -1.0).count();
            prop_assert_eq!(pos, 1);
            prop_assert_eq!(neg, 8);
        }
    }
}

#[test]
fn labeled_counts_scale_with_holes() {
    let dims = GridDims::cube(16);
    let ranges = ParamRanges::default_for_grid(dims);
    let vol = realize(&sample_story(5, &ranges, dims).unwrap()).unwrap();
    let base = sample_sparse(&vol, 0, 1).unwrap().labeled_count();
    let mut prev = base;
    for holes in [1usize, 4, 16, 64] {
        let cond = sample_sparse(&vol, holes, 1).unwrap();
        let n = cond.labeled_count();
        // Each extra hole labels at most a full column of new voxels and at
        // least one new voxel (columns are distinct and not fully labeled
        // at 0 holes unless all-air, which realize() forbids).
        assert!(n > prev || holes == 0, "labels grow with holes");
        assert!(n <= base + holes * dims.nz);
        prev = n;
    }
    // At zero holes the count equals air + one surface voxel per column.
    let air = vol.labels.iter().filter(|&&l| l == 1).count();
    assert_eq!(base, air + dims.columns());
}

#[test]
fn condition_channels_mask_counts_labels() {
    let dims = GridDims::cube(12);
    let ranges = ParamRanges::default_for_grid(dims);
    let vol = realize(&sample_story(9, &ranges, dims).unwrap()).unwrap();
    for holes in [0usize, 2, 10] {
        let cond = sample_sparse(&vol, holes, 3).unwrap();
        let cc = condition_channels(&cond);
        let n = dims.count();
        let mask_sum: f64 = cc.data[9 * n..].iter().map(|&v| v as f64).sum();
        assert_eq!(mask_sum as usize, cond.labeled_count());
        // Embedding channels are ±1 exactly where labeled, 0 elsewhere.
        for i in 0..n {
            let labeled = cond.labels[i] != UNSAMPLED;
            for c in 0..9 {
                let v = cc.data[c * n + i];
                if labeled {
                    assert!(v == 1.0 || v == -1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
}
