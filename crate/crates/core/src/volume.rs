//! Dense voxel grids: categorical labels, sparse conditions, and continuous
//! channel stacks.
//!
//! Layout is row-major over (x, y, z) with z fastest, so a vertical column at
//! fixed (x, y) is contiguous. z = 0 is the top of the grid; z grows downward
//! (deeper).

use crate::error::{CoreError, Result};
use crate::facies;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn columns(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        (x * self.ny + y) * self.nz + z
    }

    /// Start of the contiguous column at (x, y).
    #[inline]
    pub fn column_start(&self, x: usize, y: usize) -> usize {
        (x * self.ny + y) * self.nz
    }
}

/// Dense categorical volume; every voxel holds a catalog id in 1..=9.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoricalVolume {
    pub dims: GridDims,
    pub labels: Vec<u8>,
}

impl CategoricalVolume {
    pub fn filled(dims: GridDims, label: u8) -> Self {
        Self {
            dims,
            labels: vec![label; dims.count()],
        }
    }

    pub fn from_labels(dims: GridDims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.count() {
            return Err(CoreError::Data(format!(
                "volume payload has {} voxels, dims want {}",
                labels.len(),
                dims.count()
            )));
        }
        let vol = Self { dims, labels };
        vol.validate()?;
        Ok(vol)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        let i = self.dims.index(x, y, z);
        self.labels[i] = label;
    }

    pub fn column(&self, x: usize, y: usize) -> &[u8] {
        let s = self.dims.column_start(x, y);
        &self.labels[s..s + self.dims.nz]
    }

    /// Check label validity and the air-above-ground rule (scanning a column
    /// upward from the bottom, air never gives way to rock).
    pub fn validate(&self) -> Result<()> {
        for &l in &self.labels {
            if !facies::is_valid(l) {
                return Err(CoreError::Data(format!("invalid label {}", l)));
            }
        }
        for x in 0..self.dims.nx {
            for y in 0..self.dims.ny {
                let col = self.column(x, y);
                // z = 0 is the top; once rock appears going down, air must not.
                let mut seen_rock = false;
                for &l in col {
                    if l != facies::AIR {
                        seen_rock = true;
                    } else if seen_rock {
                        return Err(CoreError::Data(format!(
                            "air below ground at column ({}, {})",
                            x, y
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Depth index of the topmost non-air voxel per column; `None` for an
    /// all-air column.
    pub fn surface_z(&self, x: usize, y: usize) -> Option<usize> {
        self.column(x, y).iter().position(|&l| l != facies::AIR)
    }
}

/// Token marking an unsampled voxel in a [`ConditionVolume`].
pub const UNSAMPLED: i8 = -1;

/// Sparse observation of a categorical volume: air and the surface layer are
/// always labeled, plus full vertical traces at the borehole columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionVolume {
    pub dims: GridDims,
    /// `-1` = unsampled, otherwise a category id.
    pub labels: Vec<i8>,
    /// Sampled (x, y) columns, ascending.
    pub borehole_columns: Vec<(usize, usize)>,
}

impl ConditionVolume {
    pub fn unsampled(dims: GridDims) -> Self {
        Self {
            dims,
            labels: vec![UNSAMPLED; dims.count()],
            borehole_columns: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> i8 {
        self.labels[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn is_labeled(&self, x: usize, y: usize, z: usize) -> bool {
        self.labels[self.dims.index(x, y, z)] != UNSAMPLED
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNSAMPLED).count()
    }

    pub fn validate(&self) -> Result<()> {
        for &l in &self.labels {
            if l != UNSAMPLED && !facies::is_valid(l as u8) {
                return Err(CoreError::Data(format!("invalid condition label {}", l)));
            }
        }
        for &(x, y) in &self.borehole_columns {
            if x >= self.dims.nx || y >= self.dims.ny {
                return Err(CoreError::Data(format!(
                    "borehole column ({}, {}) outside grid",
                    x, y
                )));
            }
            let s = self.dims.column_start(x, y);
            if self.labels[s..s + self.dims.nz].iter().any(|&l| l == UNSAMPLED) {
                return Err(CoreError::Data(format!(
                    "borehole column ({}, {}) is not fully labeled",
                    x, y
                )));
            }
        }
        Ok(())
    }
}

/// Continuous channel stack over the grid: `channels` planes in row-major
/// (c, x, y, z) order. Embedded volumes use K = 9 channels; condition inputs
/// for the network use K + 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousVolume {
    pub dims: GridDims,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ContinuousVolume {
    pub fn zeros(dims: GridDims, channels: usize) -> Self {
        Self {
            dims,
            channels,
            data: vec![0.0; channels * dims.count()],
        }
    }

    pub fn from_data(dims: GridDims, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * dims.count() {
            return Err(CoreError::Data(format!(
                "continuous payload has {} values, want {} ({} channels)",
                data.len(),
                channels * dims.count(),
                channels
            )));
        }
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize, z: usize) -> f32 {
        self.data[c * self.dims.count() + self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, z: usize, v: f32) {
        let i = c * self.dims.count() + self.dims.index(x, y, z);
        self.data[i] = v;
    }
}
