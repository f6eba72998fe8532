//! Distributional and geometric properties of story sampling/realization.

use stratagen_core::facies;
use stratagen_core::geostory::{
    apply_dike_and_halos, realize, sample_story, Event, GeoStory, ParamRanges, TopoParams,
};
use stratagen_core::{CategoricalVolume, GridDims};

/// Two-sided Kolmogorov–Smirnov statistic against U(lo, hi).
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}

#[test]
fn sampled_parameters_are_uniform_over_ranges() {
    let dims = GridDims::cube(16);
    let ranges = ParamRanges::default_for_grid(dims);
    let n = 100;
    let stories: Vec<GeoStory> = (0..n)
        .map(|s| sample_story(1000 + s as u64, &ranges, dims).unwrap())
        .collect();

    // One value per story (the first event of each kind) so samples are
    // i.i.d. across seeds.
    let harvest = |pick: &dyn Fn(&Event) -> Option<f64>| -> Vec<f64> {
        stories
            .iter()
            .map(|st| st.events.iter().find_map(pick).expect("event present"))
            .collect()
    };
    let tilt_dips = harvest(&|e| match e {
        Event::Tilt { dip_deg, .. } => Some(*dip_deg),
        _ => None,
    });
    let fold_amps = harvest(&|e| match e {
        Event::Fold { amplitude, .. } => Some(*amplitude),
        _ => None,
    });
    let fault_throws = harvest(&|e| match e {
        Event::Fault { throw, .. } => Some(*throw),
        _ => None,
    });
    let dike_halves = harvest(&|e| match e {
        Event::Dike { half_thickness, .. } => Some(*half_thickness),
        _ => None,
    });
    let first_thicknesses = harvest(&|e| match e {
        Event::Deposit { thicknesses, .. } => Some(thicknesses[0]),
        _ => None,
    });
    assert_eq!(tilt_dips.len(), n);

    // Critical value at α = 0.01 for n = 100: 1.628/√n.
    let d_crit = 1.628 / (n as f64).sqrt();
    for (name, xs, (lo, hi)) in [
        ("tilt dip", tilt_dips, ranges.tilt_dip_deg),
        ("fold amplitude", fold_amps, ranges.fold_amplitude),
        ("fault throw", fault_throws, ranges.fault_throw),
        ("dike half-thickness", dike_halves, ranges.dike_half_thickness),
        ("layer thickness", first_thicknesses, ranges.layer_thickness),
    ] {
        let d = ks_uniform(xs, lo, hi);
        assert!(d < d_crit, "{name}: KS D = {d:.4} ≥ {d_crit:.4}");
    }
}

#[test]
fn sampled_parameters_stay_within_ranges() {
    let dims = GridDims::cube(16);
    let ranges = ParamRanges::default_for_grid(dims);
    for s in 0..50 {
        let st = sample_story(s, &ranges, dims).unwrap();
        let mut saw = (false, false, false, false); // deposit, tilt, fault, dike
        for ev in &st.events {
            match ev {
                Event::Deposit { thicknesses, facies } => {
                    saw.0 = true;
                    assert!(
                        (ranges.layer_count.0..=ranges.layer_count.1).contains(&thicknesses.len())
                    );
                    for &t in thicknesses {
                        assert!((ranges.layer_thickness.0..=ranges.layer_thickness.1).contains(&t));
                    }
                    for w in facies.windows(2) {
                        assert_ne!(w[0], w[1], "adjacent layers share a facies");
                    }
                }
                Event::Tilt { dip_deg, .. } => {
                    saw.1 = true;
                    assert!((ranges.tilt_dip_deg.0..=ranges.tilt_dip_deg.1).contains(dip_deg));
                }
                Event::Fold {
                    amplitude,
                    wavelength,
                    plunge_deg,
                    ..
                } => {
                    assert!((ranges.fold_amplitude.0..=ranges.fold_amplitude.1).contains(amplitude));
                    assert!(
                        (ranges.fold_wavelength.0..=ranges.fold_wavelength.1).contains(wavelength)
                    );
                    assert!(
                        (ranges.fold_plunge_deg.0..=ranges.fold_plunge_deg.1).contains(plunge_deg)
                    );
                }
                Event::Fault { throw, normal, .. } => {
                    saw.2 = true;
                    assert!((ranges.fault_throw.0..=ranges.fault_throw.1).contains(throw));
                    let n2: f64 = normal.iter().map(|v| v * v).sum();
                    assert!((n2.sqrt() - 1.0).abs() < 1e-12, "unit normal");
                }
                Event::Dike {
                    half_thickness,
                    halo_phyllic,
                    halo_argillic,
                    halo_propylitic,
                    ..
                } => {
                    saw.3 = true;
                    assert!((ranges.dike_half_thickness.0..=ranges.dike_half_thickness.1)
                        .contains(half_thickness));
                    assert!(
                        half_thickness < halo_phyllic
                            && halo_phyllic < halo_argillic
                            && halo_argillic < halo_propylitic,
                        "halo radii strictly increase outward"
                    );
                }
            }
        }
        assert!(saw.0 && saw.1 && saw.2 && saw.3, "all event kinds present");
        // Event ordering: deposit, tilt, folds, faults, dike.
        let order: Vec<u8> = st
            .events
            .iter()
            .map(|e| match e {
                Event::Deposit { .. } => 0,
                Event::Tilt { .. } => 1,
                Event::Fold { .. } => 2,
                Event::Fault { .. } => 3,
                Event::Dike { .. } => 4,
            })
            .collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(order, sorted, "events keep the canonical order");
    }
}

#[test]
fn realization_is_deterministic_and_valid() {
    let dims = GridDims::cube(16);
    let ranges = ParamRanges::default_for_grid(dims);
    for s in [0u64, 7, 99] {
        let a = realize(&sample_story(s, &ranges, dims).unwrap()).unwrap();
        let b = realize(&sample_story(s, &ranges, dims).unwrap()).unwrap();
        assert_eq!(a.labels, b.labels, "seed {s} not reproducible");
        a.validate().unwrap();
        let air = a.labels.iter().filter(|&&l| l == facies::AIR).count() as f64
            / a.labels.len() as f64;
        assert!(air <= 0.401, "air fraction {air} above the 40% ceiling");
        assert!(air >= 0.05, "air fraction {air} implausibly low");
        assert!(
            a.labels.iter().any(|&l| l == facies::SURFACE_SAND_SOIL),
            "soil veneer missing"
        );
    }
}

#[test]
fn fault_offsets_layer_interface_by_exact_throw() {
    let dims = GridDims::cube(16);
    let throw = 3.0;
    let story = GeoStory {
        seed: 0,
        grid: dims,
        events: vec![
            Event::Deposit {
                thicknesses: vec![8.0, 20.0],
                facies: vec![2, 6],
            },
            Event::Fault {
                point: [8.0, 8.0, 8.0],
                normal: [1.0, 0.0, 0.0],
                throw,
            },
        ],
        topo: TopoParams::flat(),
    };
    let vol = realize(&story).unwrap();
    // Probe the topmost category-2 voxel on each side of the vertical plane.
    let interface_z = |x: usize| -> usize {
        (0..16)
            .find(|&z| vol.get(x, 8, z) == 2)
            .expect("interface present in column")
    };
    let left = interface_z(2); // (p−q)·n̂ < 0: unmoved side
    let right = interface_z(13); // thrown side
    assert_eq!(
        right as i64 - left as i64,
        throw as i64,
        "interface depth offset equals the throw"
    );
    // Both sides remain internally layered (single interface per column).
    for x in [2usize, 13] {
        let col: Vec<u8> = (0..16).map(|z| vol.get(x, 8, z)).collect();
        let changes = col.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1, "column {x} has one interface");
    }
}

#[test]
fn vertical_dike_paints_slab_of_twice_half_thickness() {
    let dims = GridDims::cube(16);
    let host = CategoricalVolume::filled(dims, facies::CONGLOMERATE);
    let half = 2.0;
    let dike = Event::Dike {
        point: [8.0, 8.0, 8.0],
        normal: [1.0, 0.0, 0.0],
        half_thickness: half,
        halo_phyllic: half,
        halo_argillic: half,
        halo_propylitic: half,
    };
    let out = apply_dike_and_halos(&host, &dike).unwrap();
    for y in 0..16 {
        for z in 0..16 {
            let width = (0..16).filter(|&x| out.get(x, y, z) == 9).count() as f64;
            assert!(
                (width - 2.0 * half).abs() <= 1.0,
                "slab width {width} vs 2·half {}",
                2.0 * half
            );
        }
    }
    // No argillic shell when the radii collapse onto the half-thickness.
    assert!(out.labels.iter().all(|&l| l != 8));
}

#[test]
fn halo_nesting_holds_voxelwise_on_sampled_stories() {
    let dims = GridDims::cube(16);
    let ranges = ParamRanges::default_for_grid(dims);
    for s in 0..10u64 {
        let story = sample_story(s, &ranges, dims).unwrap();
        let vol = realize(&story).unwrap();
        let Some(Event::Dike { point, normal, .. }) = story
            .events
            .iter()
            .find(|e| matches!(e, Event::Dike { .. }))
        else {
            panic!("story has a dike");
        };
        let dist = |x: usize, y: usize, z: usize| -> f64 {
            ((x as f64 + 0.5 - point[0]) * normal[0]
                + (y as f64 + 0.5 - point[1]) * normal[1]
                + (z as f64 + 0.5 - point[2]) * normal[2])
                .abs()
        };
        let mut max_d9 = f64::NEG_INFINITY;
        let mut min_d8 = f64::INFINITY;
        for x in 0..16 {
            for y in 0..16 {
                for z in 0..16 {
                    match vol.get(x, y, z) {
                        9 => max_d9 = max_d9.max(dist(x, y, z)),
                        8 => min_d8 = min_d8.min(dist(x, y, z)),
                        _ => {}
                    }
                }
            }
        }
        if max_d9.is_finite() && min_d8.is_finite() {
            assert!(
                max_d9 <= min_d8,
                "seed {s}: category 9 reaches {max_d9}, category 8 starts {min_d8}"
            );
        }
    }
}

#[test]
fn undeformed_layer_fractions_match_thickness_over_depth() {
    let dims = GridDims::cube(16);
    let thicknesses = [3.3f64, 5.2, 7.5]; // sums to the grid depth
    let story = GeoStory {
        seed: 0,
        grid: dims,
        events: vec![Event::Deposit {
            thicknesses: thicknesses.to_vec(),
            facies: vec![2, 4, 6],
        }],
        topo: TopoParams::flat(),
    };
    let vol = realize(&story).unwrap();
    let total = dims.count() as f64;
    let one_layer = (dims.nx * dims.ny) as f64 / total; // one voxel layer
    for (i, &cat) in [2u8, 4, 6].iter().enumerate() {
        let frac = vol.labels.iter().filter(|&&l| l == cat).count() as f64 / total;
        let want = (thicknesses[i] / dims.nz as f64).min(1.0);
        assert!(
            (frac - want).abs() <= one_layer + 1e-12,
            "layer {cat}: fraction {frac} vs thickness ratio {want}"
        );
    }
}
