//! Training sanity on a small synthetic dataset: validation loss must trend
//! down over 30 epochs, judged on 5-epoch averages.

use stratagen_core::{geostory, sparsity, GridDims};
use stratagen_model::train::{train, ValSet};
use stratagen_model::{NoiseSchedule, Objective, TrainCase, TrainConfig, TrainState, UNetConfig};

#[test]
fn validation_loss_trends_down_over_thirty_epochs() {
    let dims = GridDims::cube(16);
    let ranges = geostory::ParamRanges::default_for_grid(dims);
    let mut cases = Vec::with_capacity(50);
    for i in 0..50u64 {
        let story = geostory::sample_story(3_000 + i, &ranges, dims).unwrap();
        let truth = geostory::realize(&story).unwrap();
        let cond = sparsity::sample_sparse(&truth, 6, 500 + i).unwrap();
        cases.push(TrainCase::<f32>::from_volumes(&truth, &cond).unwrap());
    }
    let val_cases = cases.split_off(45);

    let tcfg = TrainConfig::desk_default(Objective::FlowMatching);
    let mut state =
        TrainState::<f32>::new(UNetConfig::desk_default(), Objective::FlowMatching, 7, tcfg.lr)
            .unwrap();
    let val = ValSet::new(val_cases, Objective::FlowMatching, &NoiseSchedule::desk_default(), 42)
        .unwrap();
    let stats = train(&mut state, &tcfg, &cases, Some(&val)).unwrap();
    assert_eq!(stats.len(), 30);

    let vals: Vec<f64> = stats.iter().map(|s| s.val_loss.unwrap()).collect();
    assert!(
        vals[29] < vals[0],
        "epoch-30 validation loss {:.4} not below epoch-1 value {:.4}",
        vals[29],
        vals[0]
    );
    // Monotone trend on 5-epoch averages: each bucket strictly below the last.
    let buckets: Vec<f64> =
        vals.chunks(5).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    for w in buckets.windows(2) {
        assert!(
            w[1] < w[0],
            "5-epoch averages not decreasing: {:?}",
            buckets
                .iter()
                .map(|b| format!("{b:.4}"))
                .collect::<Vec<_>>()
        );
    }
}
