//! Run configuration: a TOML document with presets, resolved once into the
//! run directory so every later command reads the same settings.

use serde::{Deserialize, Serialize};
use stratagen_core::facies::K;
use stratagen_core::geophys;
use stratagen_core::geostory::ParamRanges;
use stratagen_core::GridDims;
use stratagen_model::{NoiseSchedule, Objective, TrainConfig, UNetConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub geophysics: GeophysSection,
    /// Generator parameter ranges; fields left out fall back to the
    /// grid-derived defaults. Fully populated once the config is resolved.
    #[serde(default)]
    pub ranges: RangesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 16, ny: 16, nz: 16 }
    }
}

impl GridSection {
    pub fn dims(&self) -> GridDims {
        GridDims::new(self.nx, self.ny, self.nz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// In-distribution cases; split into train and validation.
    pub cases: usize,
    /// Held-out cases drawn from the shifted ranges.
    pub ood_cases: usize,
    pub boreholes: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { cases: 120, ood_cases: 30, boreholes: 6, val_fraction: 0.1, seed: 1234 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub levels: usize,
    pub base_channels: usize,
    pub channel_mult: usize,
    pub gn_groups: usize,
    pub time_embed_dim: usize,
    pub time_hidden_dim: usize,
    pub attention: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = UNetConfig::desk_default();
        Self {
            levels: d.levels,
            base_channels: d.base_channels,
            channel_mult: d.channel_mult,
            gn_groups: d.gn_groups,
            time_embed_dim: d.time_embed_dim,
            time_hidden_dim: d.time_hidden_dim,
            attention: d.attention,
        }
    }
}

impl ModelSection {
    pub fn unet_config(&self, attention: bool) -> UNetConfig {
        UNetConfig {
            state_channels: K,
            cond_channels: K + 1,
            levels: self.levels,
            base_channels: self.base_channels,
            channel_mult: self.channel_mult,
            gn_groups: self.gn_groups,
            time_embed_dim: self.time_embed_dim,
            time_hidden_dim: self.time_hidden_dim,
            attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveName {
    Fm,
    Ddpm,
}

impl ObjectiveName {
    pub fn objective(self) -> Objective {
        match self {
            ObjectiveName::Fm => Objective::FlowMatching,
            ObjectiveName::Ddpm => Objective::Ddpm,
        }
    }
}

impl std::str::FromStr for ObjectiveName {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fm" => Ok(ObjectiveName::Fm),
            "ddpm" => Ok(ObjectiveName::Ddpm),
            other => Err(CliError::Config(format!("unknown objective '{other}' (fm|ddpm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    Desk,
    Full,
}

impl ScheduleName {
    pub fn schedule(self) -> NoiseSchedule {
        match self {
            ScheduleName::Desk => NoiseSchedule::desk_default(),
            ScheduleName::Full => NoiseSchedule::full_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub objective: ObjectiveName,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub schedule: ScheduleName,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            objective: ObjectiveName::Fm,
            epochs: 30,
            batch_size: 4,
            lr: 2e-4,
            clip_norm: 1.0,
            schedule: ScheduleName::Desk,
            seed: 7,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, objective: Objective) -> TrainConfig {
        TrainConfig {
            objective,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            schedule: self.schedule.schedule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// Euler steps for the flow sampler; the diffusion sampler always walks
    /// its full schedule.
    pub ode_steps: usize,
    pub seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { ode_steps: 50, seed: 99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeophysSection {
    pub voxel_size_m: f64,
    pub receiver_grid: usize,
    pub receiver_height_voxels: f64,
    pub receiver_padding_voxels: f64,
    pub noise_seed: u64,
}

impl Default for GeophysSection {
    fn default() -> Self {
        Self {
            voxel_size_m: geophys::DEFAULT_VOXEL_SIZE_M,
            receiver_grid: geophys::RECEIVER_GRID,
            receiver_height_voxels: 2.0,
            receiver_padding_voxels: 2.0,
            noise_seed: 4242,
        }
    }
}

macro_rules! ranges_section {
    ($($field:ident : $ty:ty),* $(,)?) => {
        /// Optional overrides for the grid-derived generator ranges. Every
        /// field is filled in when the config is resolved, so the copy in a
        /// run directory is always complete.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct RangesSection {
            $(
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl RangesSection {
            pub fn resolve(&self, dims: GridDims) -> ParamRanges {
                let base = ParamRanges::default_for_grid(dims);
                ParamRanges {
                    $($field: self.$field.unwrap_or(base.$field),)*
                }
            }

            pub fn from_ranges(r: &ParamRanges) -> Self {
                Self {
                    $($field: Some(r.$field),)*
                }
            }
        }
    };
}

ranges_section! {
    layer_count: (usize, usize),
    layer_thickness: (f64, f64),
    tilt_azimuth_deg: (f64, f64),
    tilt_dip_deg: (f64, f64),
    fold_count: (usize, usize),
    fold_amplitude: (f64, f64),
    fold_wavelength: (f64, f64),
    fold_plunge_deg: (f64, f64),
    fault_count: (usize, usize),
    fault_throw: (f64, f64),
    fault_dip_deg: (f64, f64),
    dike_half_thickness: (f64, f64),
    halo_phyllic_extra: (f64, f64),
    halo_argillic_extra: (f64, f64),
    halo_propylitic_extra: (f64, f64),
    soil_thickness: (f64, f64),
    topo_base_frac: (f64, f64),
    topo_amp_frac: (f64, f64),
    topo_noise: (f64, f64),
}

/// Out-of-distribution shift: structural intensities move to a band that
/// starts at the training maximum, so the two populations do not overlap.
pub fn ood_ranges(base: &ParamRanges) -> Result<ParamRanges> {
    let mut r = base.clone();
    r.fold_amplitude = (base.fold_amplitude.1, 1.5 * base.fold_amplitude.1);
    r.fault_throw = (base.fault_throw.1, 1.5 * base.fault_throw.1);
    r.tilt_dip_deg = (base.tilt_dip_deg.1, base.tilt_dip_deg.1 + 6.0);
    r.dike_half_thickness = (base.dike_half_thickness.1, 1.5 * base.dike_half_thickness.1);
    r.validate()?;
    Ok(r)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("desk16").expect("desk16 preset")
    }
}

impl RunConfig {
    /// Named starting points: `desk16` (CPU-scale default), `desk32` (larger
    /// desk grid), `full64` (paper-scale settings; not meant for a laptop).
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self {
            grid: GridSection::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            sampling: SamplingSection::default(),
            geophysics: GeophysSection::default(),
            ranges: RangesSection::default(),
        };
        match name {
            "desk16" => {}
            "desk32" => {
                cfg.grid = GridSection { nx: 32, ny: 32, nz: 32 };
                cfg.dataset.cases = 150;
                cfg.dataset.boreholes = 8;
                cfg.training.epochs = 40;
            }
            "full64" => {
                cfg.grid = GridSection { nx: 64, ny: 64, nz: 64 };
                cfg.dataset.cases = 4000;
                cfg.dataset.ood_cases = 400;
                cfg.dataset.boreholes = 12;
                cfg.model.levels = 4;
                cfg.model.base_channels = 32;
                cfg.model.time_embed_dim = 64;
                cfg.model.time_hidden_dim = 128;
                cfg.training.epochs = 200;
                cfg.training.schedule = ScheduleName::Full;
                cfg.sampling.ode_steps = 100;
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown preset '{other}' (desk16|desk32|full64)"
                )))
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_toml(&text)?;
        cfg.validated()
    }

    /// Fill in derived values and check cross-field consistency.
    pub fn resolve(mut self) -> Result<Self> {
        let ranges = self.ranges.resolve(self.grid.dims());
        ranges.validate()?;
        ood_ranges(&ranges)?;
        self.ranges = RangesSection::from_ranges(&ranges);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let d = self.grid.dims();
        let down = 1usize << (self.model.levels.saturating_sub(1));
        for (name, n) in [("nx", d.nx), ("ny", d.ny), ("nz", d.nz)] {
            if n == 0 || n % down != 0 {
                return Err(CliError::Config(format!(
                    "grid {name}={n} must be a positive multiple of {down} (levels={})",
                    self.model.levels
                )));
            }
        }
        if self.dataset.cases < 2 {
            return Err(CliError::Config("dataset.cases must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.val_fraction) {
            return Err(CliError::Config("dataset.val_fraction must be in [0, 1)".into()));
        }
        if self.dataset.boreholes == 0 || self.dataset.boreholes > d.columns() {
            return Err(CliError::Config(format!(
                "dataset.boreholes must be in 1..={}",
                d.columns()
            )));
        }
        if self.training.epochs == 0 || self.training.batch_size == 0 {
            return Err(CliError::Config("training epochs and batch_size must be >= 1".into()));
        }
        if !(self.training.lr > 0.0) {
            return Err(CliError::Config("training.lr must be > 0".into()));
        }
        if self.sampling.ode_steps == 0 {
            return Err(CliError::Config("sampling.ode_steps must be >= 1".into()));
        }
        if !(self.geophysics.voxel_size_m > 0.0) {
            return Err(CliError::Config("geophysics.voxel_size_m must be > 0".into()));
        }
        if self.geophysics.receiver_grid == 0 {
            return Err(CliError::Config("geophysics.receiver_grid must be >= 1".into()));
        }
        if !(self.geophysics.receiver_height_voxels > 0.0) {
            return Err(CliError::Config("receivers must sit above the grid top".into()));
        }
        Ok(self)
    }

    /// Train/validation sizes for the in-distribution cases.
    pub fn split_sizes(&self) -> (usize, usize) {
        let n = self.dataset.cases;
        let val = ((n as f64) * self.dataset.val_fraction).round() as usize;
        let val = val.clamp(1, n - 1);
        (n - val, val)
    }

    pub fn param_ranges(&self) -> ParamRanges {
        self.ranges.resolve(self.grid.dims())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_roundtrips_through_toml() {
        let cfg = RunConfig::preset("desk16").unwrap().resolve().unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        // Resolution is idempotent.
        assert_eq!(back.resolve().unwrap().to_toml(), text);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::preset("desk16").unwrap());
        let cfg = RunConfig::from_toml("[grid]\nnx = 32\nny = 32\nnz = 16\n").unwrap();
        assert_eq!(cfg.grid.dims(), GridDims::new(32, 32, 16));
        assert_eq!(cfg.dataset.cases, 120);
    }

    #[test]
    fn range_overrides_overlay_grid_defaults() {
        let text = "[ranges]\nfault_count = [0, 0]\ntilt_dip_deg = [1.0, 3.0]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let r = cfg.param_ranges();
        assert_eq!(r.fault_count, (0, 0));
        assert_eq!(r.tilt_dip_deg, (1.0, 3.0));
        let base = ParamRanges::default_for_grid(cfg.grid.dims());
        assert_eq!(r.fold_amplitude, base.fold_amplitude);
    }

    #[test]
    fn ood_band_is_disjoint_from_training_band() {
        let base = ParamRanges::default_for_grid(GridDims::cube(16));
        let ood = ood_ranges(&base).unwrap();
        assert_eq!(ood.fold_amplitude.0, base.fold_amplitude.1);
        assert!(ood.fold_amplitude.1 > ood.fold_amplitude.0);
        assert_eq!(ood.fault_throw.0, base.fault_throw.1);
        assert_eq!(ood.tilt_dip_deg, (12.0, 18.0));
        // Untouched fields stay put.
        assert_eq!(ood.layer_count, base.layer_count);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(RunConfig::preset("mainframe").is_err());
        let odd = "[grid]\nnx = 14\nny = 16\nnz = 16\n";
        assert!(RunConfig::from_toml(odd).unwrap().validated().is_err());
        let toml = "[training]\nepochs = 0\n";
        assert!(RunConfig::from_toml(toml).unwrap().validated().is_err());
        assert!(RunConfig::from_toml("nonsense = true").is_err());
    }
}
