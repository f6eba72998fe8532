//! Procedural geological histories and their realization as categorical
//! volumes.
//!
//! A story is an ordered event sequence — deposition, regional tilt, folding,
//! faulting, a dike with alteration halos, then topography and a soil veneer.
//! Realization works by inverse kinematics: each voxel undoes the deformation
//! events in reverse order to recover its pre-deformation stratigraphic
//! height, which selects the deposited layer. The dike and halos are painted
//! by post-deformation distance to the dike plane, and topography carves air
//! last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::facies;
use crate::volume::{CategoricalVolume, GridDims};

/// One geological event.
#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    /// Layers listed bottom-up: `thicknesses[0]` is the oldest, deepest layer.
    Deposit {
        thicknesses: Vec<f64>,
        facies: Vec<u8>,
    },
    /// Regional tilt about the grid center.
    Tilt { azimuth_deg: f64, dip_deg: f64 },
    /// Sinusoidal vertical displacement; plunge acts as a linear phase
    /// gradient along y.
    Fold {
        amplitude: f64,
        wavelength: f64,
        phase: f64,
        plunge_deg: f64,
    },
    /// Rigid vertical offset of the side of the plane the normal points to.
    Fault {
        point: [f64; 3],
        normal: [f64; 3],
        throw: f64,
    },
    /// Planar intrusion with nested alteration halos (radii from the plane).
    Dike {
        point: [f64; 3],
        normal: [f64; 3],
        half_thickness: f64,
        halo_phyllic: f64,
        halo_argillic: f64,
        halo_propylitic: f64,
    },
}

/// Ground-surface model applied after all rock events. Heights are voxels
/// above the grid bottom; the ground is clamped to [0.6·Z, Z] so at least
/// 60% of each column stays subsurface.
#[derive(Clone, Debug, PartialEq)]
pub struct TopoParams {
    pub base_frac: f64,
    pub amp_frac: f64,
    pub freq_x: f64,
    pub freq_y: f64,
    pub phase_x: f64,
    pub phase_y: f64,
    pub noise_amp: f64,
    pub noise_seed: u64,
    pub soil_thickness: f64,
}

impl TopoParams {
    /// No air, no soil: the ground sits at the top of the grid.
    pub fn flat() -> Self {
        Self {
            base_frac: 1.0,
            amp_frac: 0.0,
            freq_x: 1.0,
            freq_y: 1.0,
            phase_x: 0.0,
            phase_y: 0.0,
            noise_amp: 0.0,
            noise_seed: 0,
            soil_thickness: 0.0,
        }
    }

    /// Ground height in voxels above the grid bottom for column (x, y).
    pub fn ground_height(&self, dims: GridDims, x: usize, y: usize) -> f64 {
        let z = dims.nz as f64;
        let fx = 2.0 * std::f64::consts::PI * self.freq_x * (x as f64 + 0.5) / dims.nx as f64;
        let fy = 2.0 * std::f64::consts::PI * self.freq_y * (y as f64 + 0.5) / dims.ny as f64;
        let wave = (fx + self.phase_x).sin() * (fy + self.phase_y).sin();
        let noise = (hash01(self.noise_seed, x as u64, y as u64) * 2.0 - 1.0) * self.noise_amp;
        (z * (self.base_frac + self.amp_frac * wave) + noise).clamp(0.6 * z, z)
    }
}

/// splitmix64-based hash mapped to [0, 1).
fn hash01(seed: u64, x: u64, y: u64) -> f64 {
    let mut s = seed ^ x.wrapping_mul(0x9e3779b97f4a7c15) ^ y.wrapping_mul(0xc2b2ae3d27d4eb4f);
    s = s.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = s;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// A complete, realizable geological history.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoStory {
    pub seed: u64,
    pub grid: GridDims,
    /// Deposit first, then tilt/folds/faults, then the dike.
    pub events: Vec<Event>,
    /// Topography/soil close the sequence; they carry their own parameters
    /// rather than an `Event` variant since they act on columns, not rock.
    pub topo: TopoParams,
}

/// Inclusive sampling ranges for every story parameter. Lengths are voxels,
/// angles degrees. Halo ranges are increments stacked outward from the dike
/// half-thickness, which keeps the radii strictly ordered by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRanges {
    pub layer_count: (usize, usize),
    pub layer_thickness: (f64, f64),
    pub tilt_azimuth_deg: (f64, f64),
    pub tilt_dip_deg: (f64, f64),
    pub fold_count: (usize, usize),
    pub fold_amplitude: (f64, f64),
    pub fold_wavelength: (f64, f64),
    pub fold_plunge_deg: (f64, f64),
    pub fault_count: (usize, usize),
    pub fault_throw: (f64, f64),
    pub fault_dip_deg: (f64, f64),
    pub dike_half_thickness: (f64, f64),
    pub halo_phyllic_extra: (f64, f64),
    pub halo_argillic_extra: (f64, f64),
    pub halo_propylitic_extra: (f64, f64),
    pub soil_thickness: (f64, f64),
    pub topo_base_frac: (f64, f64),
    pub topo_amp_frac: (f64, f64),
    pub topo_noise: (f64, f64),
}

impl ParamRanges {
    /// Defaults scaled to the grid so stories look comparable at 16³–64³.
    pub fn default_for_grid(dims: GridDims) -> Self {
        let z = dims.nz as f64;
        let x = dims.nx as f64;
        Self {
            layer_count: (3, 6),
            layer_thickness: (0.10 * z, 0.30 * z),
            tilt_azimuth_deg: (0.0, 360.0),
            tilt_dip_deg: (2.0, 12.0),
            fold_count: (1, 2),
            fold_amplitude: (0.03 * z, 0.12 * z),
            fold_wavelength: (0.6 * x, 1.6 * x),
            fold_plunge_deg: (0.0, 15.0),
            fault_count: (2, 2),
            fault_throw: (0.05 * z, 0.20 * z),
            fault_dip_deg: (50.0, 80.0),
            dike_half_thickness: (0.03 * x, 0.08 * x),
            halo_phyllic_extra: (0.02 * x, 0.05 * x),
            halo_argillic_extra: (0.02 * x, 0.06 * x),
            halo_propylitic_extra: (0.02 * x, 0.06 * x),
            soil_thickness: (0.05 * z, 0.10 * z),
            topo_base_frac: (0.62, 0.72),
            topo_amp_frac: (0.02, 0.08),
            topo_noise: (0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn ord(name: &str, r: (f64, f64)) -> Result<()> {
            if !(r.0.is_finite() && r.1.is_finite()) || r.0 > r.1 {
                return Err(CoreError::Config(format!("range {name}: {:?} is empty", r)));
            }
            Ok(())
        }
        fn ord_u(name: &str, r: (usize, usize)) -> Result<()> {
            if r.0 > r.1 {
                return Err(CoreError::Config(format!("range {name}: {:?} is empty", r)));
            }
            Ok(())
        }
        ord_u("layer_count", self.layer_count)?;
        if self.layer_count.0 == 0 {
            return Err(CoreError::Config("layer_count must be >= 1".into()));
        }
        ord("layer_thickness", self.layer_thickness)?;
        if self.layer_thickness.0 <= 0.0 {
            return Err(CoreError::Config("layer thickness must be > 0".into()));
        }
        ord("tilt_azimuth_deg", self.tilt_azimuth_deg)?;
        ord("tilt_dip_deg", self.tilt_dip_deg)?;
        ord_u("fold_count", self.fold_count)?;
        ord("fold_amplitude", self.fold_amplitude)?;
        ord("fold_wavelength", self.fold_wavelength)?;
        if self.fold_wavelength.0 <= 0.0 {
            return Err(CoreError::Config("fold wavelength must be > 0".into()));
        }
        ord("fold_plunge_deg", self.fold_plunge_deg)?;
        ord_u("fault_count", self.fault_count)?;
        ord("fault_throw", self.fault_throw)?;
        ord("fault_dip_deg", self.fault_dip_deg)?;
        ord("dike_half_thickness", self.dike_half_thickness)?;
        ord("halo_phyllic_extra", self.halo_phyllic_extra)?;
        ord("halo_argillic_extra", self.halo_argillic_extra)?;
        ord("halo_propylitic_extra", self.halo_propylitic_extra)?;
        for (name, r) in [
            ("halo_phyllic_extra", self.halo_phyllic_extra),
            ("halo_argillic_extra", self.halo_argillic_extra),
            ("halo_propylitic_extra", self.halo_propylitic_extra),
        ] {
            if r.0 < 0.0 {
                return Err(CoreError::Config(format!("{name} must be >= 0")));
            }
        }
        ord("soil_thickness", self.soil_thickness)?;
        ord("topo_base_frac", self.topo_base_frac)?;
        ord("topo_amp_frac", self.topo_amp_frac)?;
        ord("topo_noise", self.topo_noise)?;
        Ok(())
    }
}

/// Draw a story from the ranges; a pure function of (seed, ranges, grid).
/// Parameters are drawn in a fixed documented order, so identical inputs
/// reproduce identical stories bit-for-bit.
pub fn sample_story(seed: u64, ranges: &ParamRanges, grid: GridDims) -> Result<GeoStory> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();

    // 1. Deposition: layer count, then (thickness, facies) per layer.
    let n_layers = rng.gen_range(ranges.layer_count.0..=ranges.layer_count.1);
    let mut thicknesses = Vec::with_capacity(n_layers);
    let mut layer_facies = Vec::with_capacity(n_layers);
    let mut prev: Option<u8> = None;
    for _ in 0..n_layers {
        thicknesses.push(rng.gen_range(ranges.layer_thickness.0..=ranges.layer_thickness.1));
        let mut pick = facies::DEPOSIT_HOSTS[rng.gen_range(0..facies::DEPOSIT_HOSTS.len())];
        if prev == Some(pick) {
            // avoid invisible boundaries between identical neighbors
            let idx = facies::DEPOSIT_HOSTS.iter().position(|&f| f == pick).unwrap();
            pick = facies::DEPOSIT_HOSTS[(idx + 1) % facies::DEPOSIT_HOSTS.len()];
        }
        prev = Some(pick);
        layer_facies.push(pick);
    }
    events.push(Event::Deposit {
        thicknesses,
        facies: layer_facies,
    });

    // 2. Tilt.
    events.push(Event::Tilt {
        azimuth_deg: rng.gen_range(ranges.tilt_azimuth_deg.0..=ranges.tilt_azimuth_deg.1),
        dip_deg: rng.gen_range(ranges.tilt_dip_deg.0..=ranges.tilt_dip_deg.1),
    });

    // 3. Folds.
    let n_folds = rng.gen_range(ranges.fold_count.0..=ranges.fold_count.1);
    for _ in 0..n_folds {
        events.push(Event::Fold {
            amplitude: rng.gen_range(ranges.fold_amplitude.0..=ranges.fold_amplitude.1),
            wavelength: rng.gen_range(ranges.fold_wavelength.0..=ranges.fold_wavelength.1),
            phase: rng.gen_range(0.0..=std::f64::consts::TAU),
            plunge_deg: rng.gen_range(ranges.fold_plunge_deg.0..=ranges.fold_plunge_deg.1),
        });
    }

    // 4. Faults.
    let n_faults = rng.gen_range(ranges.fault_count.0..=ranges.fault_count.1);
    for _ in 0..n_faults {
        let point = interior_point(&mut rng, grid);
        let azimuth = rng.gen_range(0.0..=std::f64::consts::TAU);
        let dip = rng
            .gen_range(ranges.fault_dip_deg.0..=ranges.fault_dip_deg.1)
            .to_radians();
        events.push(Event::Fault {
            point,
            normal: plane_normal(azimuth, dip),
            throw: rng.gen_range(ranges.fault_throw.0..=ranges.fault_throw.1),
        });
    }

    // 5. Dike with halos; radii stacked outward so ordering is structural.
    let point = interior_point(&mut rng, grid);
    let azimuth = rng.gen_range(0.0..=std::f64::consts::TAU);
    let dip = rng.gen_range(60.0f64..=89.0).to_radians();
    let half = rng.gen_range(ranges.dike_half_thickness.0..=ranges.dike_half_thickness.1);
    let r_phy = half + rng.gen_range(ranges.halo_phyllic_extra.0..=ranges.halo_phyllic_extra.1);
    let r_arg = r_phy + rng.gen_range(ranges.halo_argillic_extra.0..=ranges.halo_argillic_extra.1);
    let r_pro =
        r_arg + rng.gen_range(ranges.halo_propylitic_extra.0..=ranges.halo_propylitic_extra.1);
    events.push(Event::Dike {
        point,
        normal: plane_normal(azimuth, dip),
        half_thickness: half,
        halo_phyllic: r_phy,
        halo_argillic: r_arg,
        halo_propylitic: r_pro,
    });

    // 6. Topography and soil.
    let topo = TopoParams {
        base_frac: rng.gen_range(ranges.topo_base_frac.0..=ranges.topo_base_frac.1),
        amp_frac: rng.gen_range(ranges.topo_amp_frac.0..=ranges.topo_amp_frac.1),
        freq_x: rng.gen_range(0.5..=2.0),
        freq_y: rng.gen_range(0.5..=2.0),
        phase_x: rng.gen_range(0.0..=std::f64::consts::TAU),
        phase_y: rng.gen_range(0.0..=std::f64::consts::TAU),
        noise_amp: rng.gen_range(ranges.topo_noise.0..=ranges.topo_noise.1),
        noise_seed: rng.gen(),
        soil_thickness: rng.gen_range(ranges.soil_thickness.0..=ranges.soil_thickness.1),
    };

    Ok(GeoStory {
        seed,
        grid,
        events,
        topo,
    })
}

fn interior_point(rng: &mut ChaCha8Rng, grid: GridDims) -> [f64; 3] {
    let (x, y, z) = (grid.nx as f64, grid.ny as f64, grid.nz as f64);
    [
        rng.gen_range(0.1 * x..=0.9 * x),
        rng.gen_range(0.1 * y..=0.9 * y),
        rng.gen_range(0.2 * z..=0.8 * z),
    ]
}

/// Unit normal of a plane with the given strike azimuth and dip (radians).
/// A dip of 90° yields a vertical plane (horizontal normal).
fn plane_normal(azimuth: f64, dip: f64) -> [f64; 3] {
    [dip.sin() * azimuth.cos(), dip.sin() * azimuth.sin(), dip.cos()]
}

/// Realize a story as a categorical volume.
pub fn realize(story: &GeoStory) -> Result<CategoricalVolume> {
    let dims = story.grid;
    let Some(Event::Deposit {
        thicknesses,
        facies: layer_facies,
    }) = story.events.first()
    else {
        return Err(CoreError::Config(
            "story must start with a Deposit event".into(),
        ));
    };
    if thicknesses.is_empty() || thicknesses.len() != layer_facies.len() {
        return Err(CoreError::Config(
            "deposit needs matching, non-empty thickness and facies lists".into(),
        ));
    }
    if thicknesses.iter().any(|&t| t <= 0.0) {
        return Err(CoreError::Config("layer thicknesses must be > 0".into()));
    }
    for &f in layer_facies {
        if !facies::is_valid(f) {
            return Err(CoreError::Data(format!("invalid layer facies {f}")));
        }
    }
    // Cumulative layer tops measured from the grid bottom.
    let bounds: Vec<f64> = thicknesses
        .iter()
        .scan(0.0, |acc, &t| {
            *acc += t;
            Some(*acc)
        })
        .collect();

    let deformations: Vec<&Event> = story.events[1..]
        .iter()
        .filter(|e| matches!(e, Event::Tilt { .. } | Event::Fold { .. } | Event::Fault { .. }))
        .collect();

    let (cx, cy) = (dims.nx as f64 / 2.0, dims.ny as f64 / 2.0);
    let nz_f = dims.nz as f64;
    let mut vol = CategoricalVolume::filled(dims, layer_facies[0]);
    for x in 0..dims.nx {
        let px = x as f64 + 0.5;
        for y in 0..dims.ny {
            let py = y as f64 + 0.5;
            for z in 0..dims.nz {
                // Height above the grid bottom; z indices grow downward.
                let mut h = nz_f - (z as f64 + 0.5);
                // Undo deformations newest-first to recover the
                // pre-deformation stratigraphic height.
                for ev in deformations.iter().rev() {
                    match ev {
                        Event::Fault {
                            point,
                            normal,
                            throw,
                        } => {
                            let pz = nz_f - h; // current position, index space
                            let d = (px - point[0]) * normal[0]
                                + (py - point[1]) * normal[1]
                                + (pz - point[2]) * normal[2];
                            if d > 0.0 {
                                // This side dropped by `throw` during the event.
                                h += throw;
                            }
                        }
                        Event::Fold {
                            amplitude,
                            wavelength,
                            phase,
                            plunge_deg,
                        } => {
                            let k = std::f64::consts::TAU / wavelength;
                            let arg = k * px + phase + k * plunge_deg.to_radians().tan() * py;
                            h -= amplitude * arg.sin();
                        }
                        Event::Tilt {
                            azimuth_deg,
                            dip_deg,
                        } => {
                            let az = azimuth_deg.to_radians();
                            h -= dip_deg.to_radians().tan()
                                * ((px - cx) * az.cos() + (py - cy) * az.sin());
                        }
                        _ => {}
                    }
                }
                vol.set(x, y, z, layer_at_height(&bounds, layer_facies, h));
            }
        }
    }

    // Dike and halos act on post-deformation geometry.
    for ev in &story.events {
        if matches!(ev, Event::Dike { .. }) {
            vol = apply_dike_and_halos(&vol, ev)?;
        }
    }

    apply_topography(&mut vol, &story.topo);
    vol.validate()?;
    Ok(vol)
}

/// Layer lookup: bands are (bound[i-1], bound[i]], so a voxel exactly on a
/// boundary belongs to the deeper layer. Heights off either end clamp to the
/// bottom/top layer.
fn layer_at_height(bounds: &[f64], layer_facies: &[u8], h: f64) -> u8 {
    for (i, &b) in bounds.iter().enumerate() {
        if h <= b {
            return layer_facies[i];
        }
    }
    *layer_facies.last().expect("non-empty layers")
}

/// Paint the dike core and alteration shells. Distances use strict `<`, so
/// zero half-thickness and radii leave the volume untouched. The outermost
/// (propylitic) shell deliberately maps back onto the host facies: it alters
/// mineralogy, not the category label, keeping the catalog at nine entries.
pub fn apply_dike_and_halos(vol: &CategoricalVolume, dike: &Event) -> Result<CategoricalVolume> {
    let Event::Dike {
        point,
        normal,
        half_thickness,
        halo_phyllic,
        halo_argillic,
        halo_propylitic,
    } = dike
    else {
        return Err(CoreError::Usage("apply_dike_and_halos needs a Dike event".into()));
    };
    let norm = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(CoreError::Config("dike plane normal must be non-zero".into()));
    }
    if !(halo_phyllic <= halo_argillic && halo_argillic <= halo_propylitic) {
        return Err(CoreError::Config(format!(
            "halo radii must not decrease outward: {halo_phyllic} / {halo_argillic} / {halo_propylitic}"
        )));
    }
    let n = [normal[0] / norm, normal[1] / norm, normal[2] / norm];
    let core_r = half_thickness.max(*halo_phyllic);
    let mut out = vol.clone();
    for x in 0..vol.dims.nx {
        let px = x as f64 + 0.5;
        for y in 0..vol.dims.ny {
            let py = y as f64 + 0.5;
            for z in 0..vol.dims.nz {
                if vol.get(x, y, z) == facies::AIR {
                    continue;
                }
                let pz = z as f64 + 0.5;
                let d = ((px - point[0]) * n[0] + (py - point[1]) * n[1] + (pz - point[2]) * n[2])
                    .abs();
                if d < core_r {
                    out.set(x, y, z, facies::PHYLLIC_SILICIFICATION);
                } else if d < *halo_argillic {
                    out.set(x, y, z, facies::OUTER_ARGILLIC);
                }
                // d < halo_propylitic: propylitic alteration, host label kept.
            }
        }
    }
    Ok(out)
}

/// Carve air above the ground surface and paint the soil veneer below it.
fn apply_topography(vol: &mut CategoricalVolume, topo: &TopoParams) {
    let dims = vol.dims;
    let nz_f = dims.nz as f64;
    for x in 0..dims.nx {
        for y in 0..dims.ny {
            let ground = topo.ground_height(dims, x, y);
            for z in 0..dims.nz {
                let h = nz_f - (z as f64 + 0.5);
                if h > ground {
                    vol.set(x, y, z, facies::AIR);
                } else if ground - h < topo.soil_thickness {
                    vol.set(x, y, z, facies::SURFACE_SAND_SOIL);
                }
            }
        }
    }
}
