//! On-disk formats: GVL1 volume files, GCK1 checkpoint archives, and PGM
//! slice images. All integers and floats are little-endian.

use std::path::Path;

use stratagen_core::facies::K;
use stratagen_core::geophys::FieldMap;
use stratagen_core::{CategoricalVolume, ConditionVolume, ContinuousVolume, GridDims};
use stratagen_model::checkpoint::{NamedTensor, TrainSnapshot};
use stratagen_model::train::LogLine;
use stratagen_model::{Objective, UNetConfig};

use crate::error::{CliError, Result};

const VOLUME_MAGIC: &[u8; 4] = b"GVL1";
const VOLUME_VERSION: u16 = 1;
const CHECKPOINT_MAGIC: &[u8; 4] = b"GCK1";
const CHECKPOINT_VERSION: u16 = 1;

pub const KIND_CATEGORICAL: u8 = 0;
pub const KIND_CONDITION: u8 = 1;
pub const KIND_CONTINUOUS: u8 = 2;
pub const KIND_FIELDMAP: u8 = 3;

// ---------------------------------------------------------------- byte io

#[derive(Default)]
struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
    fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for &v in vs {
            self.f32(v);
        }
    }
    fn str16(&mut self, s: &str) {
        let b = s.as_bytes();
        assert!(b.len() <= u16::MAX as usize, "name too long");
        self.u16(b.len() as u16);
        self.bytes(b);
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], what: &'a str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::Data(format!("{}: truncated file", self.what)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CliError::Data(format!("{}: invalid utf-8 name", self.what)))
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CliError::Data(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

// ------------------------------------------------------------ volume files

fn volume_header(kind: u8, dims: [u32; 3]) -> ByteWriter {
    let mut w = ByteWriter::default();
    w.bytes(VOLUME_MAGIC);
    w.u16(VOLUME_VERSION);
    w.u8(kind);
    for d in dims {
        w.u32(d);
    }
    w
}

fn read_volume_header(r: &mut ByteReader, want_kind: u8) -> Result<[usize; 3]> {
    let magic = r.take(4)?;
    if magic != VOLUME_MAGIC {
        return Err(CliError::Data(format!("{}: not a GVL1 file", r.what)));
    }
    let version = r.u16()?;
    if version != VOLUME_VERSION {
        return Err(CliError::Data(format!("{}: unsupported version {version}", r.what)));
    }
    let kind = r.u8()?;
    if kind != want_kind {
        return Err(CliError::Data(format!(
            "{}: kind {kind}, expected {want_kind}",
            r.what
        )));
    }
    let a = r.u32()? as usize;
    let b = r.u32()? as usize;
    let c = r.u32()? as usize;
    Ok([a, b, c])
}

fn grid_of(dims: [usize; 3]) -> GridDims {
    GridDims::new(dims[0], dims[1], dims[2])
}

pub fn write_categorical(path: &Path, vol: &CategoricalVolume) -> Result<()> {
    let d = vol.dims;
    let mut w = volume_header(KIND_CATEGORICAL, [d.nx as u32, d.ny as u32, d.nz as u32]);
    w.bytes(&vol.labels);
    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read_categorical(path: &Path) -> Result<CategoricalVolume> {
    let raw = std::fs::read(path)?;
    let what = path.display().to_string();
    let mut r = ByteReader::new(&raw, &what);
    let dims = read_volume_header(&mut r, KIND_CATEGORICAL)?;
    let grid = grid_of(dims);
    let labels = r.take(grid.count())?.to_vec();
    r.finish()?;
    Ok(CategoricalVolume::from_labels(grid, labels)?)
}

/// The condition payload is the i8 label grid; a footer lists the borehole
/// columns explicitly, since surface mapping also produces fully labeled
/// columns and the two cannot be told apart from the grid alone.
pub fn write_condition(path: &Path, cond: &ConditionVolume) -> Result<()> {
    let d = cond.dims;
    let mut w = volume_header(KIND_CONDITION, [d.nx as u32, d.ny as u32, d.nz as u32]);
    w.bytes(&cond.labels.iter().map(|&v| v as u8).collect::<Vec<u8>>());
    w.u32(cond.borehole_columns.len() as u32);
    for &(x, y) in &cond.borehole_columns {
        w.u32(x as u32);
        w.u32(y as u32);
    }
    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read_condition(path: &Path) -> Result<ConditionVolume> {
    let raw = std::fs::read(path)?;
    let what = path.display().to_string();
    let mut r = ByteReader::new(&raw, &what);
    let dims = read_volume_header(&mut r, KIND_CONDITION)?;
    let grid = grid_of(dims);
    let labels: Vec<i8> = r.take(grid.count())?.iter().map(|&v| v as i8).collect();
    let n_holes = r.u32()? as usize;
    let mut borehole_columns = Vec::with_capacity(n_holes);
    for _ in 0..n_holes {
        let x = r.u32()? as usize;
        let y = r.u32()? as usize;
        borehole_columns.push((x, y));
    }
    r.finish()?;
    let cond = ConditionVolume { dims: grid, labels, borehole_columns };
    cond.validate()?;
    Ok(cond)
}

pub fn write_continuous(path: &Path, vol: &ContinuousVolume) -> Result<()> {
    if vol.channels != K {
        return Err(CliError::Config(format!(
            "continuous volume files carry {K} channels, got {}",
            vol.channels
        )));
    }
    let d = vol.dims;
    let mut w = volume_header(KIND_CONTINUOUS, [d.nx as u32, d.ny as u32, d.nz as u32]);
    w.f32s(&vol.data);
    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read_continuous(path: &Path) -> Result<ContinuousVolume> {
    let raw = std::fs::read(path)?;
    let what = path.display().to_string();
    let mut r = ByteReader::new(&raw, &what);
    let dims = read_volume_header(&mut r, KIND_CONTINUOUS)?;
    let grid = grid_of(dims);
    let data = r.f32s(K * grid.count())?;
    r.finish()?;
    Ok(ContinuousVolume::from_data(grid, K, data)?)
}

/// A field map as persisted: five planes of `n_east × n_north` f32 values —
/// easting, northing, elevation, anomaly value, and the (replicated) noise
/// sigma. Conversion from the f64 in-memory map happens once, here.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMapFile {
    pub n_east: usize,
    pub n_north: usize,
    pub easting: Vec<f32>,
    pub northing: Vec<f32>,
    pub elevation: Vec<f32>,
    pub values: Vec<f32>,
    pub noise_sigma: f32,
}

impl FieldMapFile {
    pub fn from_map(map: &FieldMap) -> Self {
        Self {
            n_east: map.n_east,
            n_north: map.n_north,
            easting: map.receivers.iter().map(|r| r.easting as f32).collect(),
            northing: map.receivers.iter().map(|r| r.northing as f32).collect(),
            elevation: map.receivers.iter().map(|r| r.elevation as f32).collect(),
            values: map.values.iter().map(|&v| v as f32).collect(),
            noise_sigma: map.noise_sigma as f32,
        }
    }

    pub fn count(&self) -> usize {
        self.n_east * self.n_north
    }
}

pub fn write_fieldmap(path: &Path, map: &FieldMapFile) -> Result<()> {
    let n = map.count();
    if [&map.easting, &map.northing, &map.elevation, &map.values]
        .iter()
        .any(|v| v.len() != n)
    {
        return Err(CliError::Config("field map plane lengths disagree".into()));
    }
    let mut w = volume_header(KIND_FIELDMAP, [map.n_east as u32, map.n_north as u32, 5]);
    w.f32s(&map.easting);
    w.f32s(&map.northing);
    w.f32s(&map.elevation);
    w.f32s(&map.values);
    for _ in 0..n {
        w.f32(map.noise_sigma);
    }
    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read_fieldmap(path: &Path) -> Result<FieldMapFile> {
    let raw = std::fs::read(path)?;
    let what = path.display().to_string();
    let mut r = ByteReader::new(&raw, &what);
    let dims = read_volume_header(&mut r, KIND_FIELDMAP)?;
    if dims[2] != 5 {
        return Err(CliError::Data(format!("{what}: field maps carry 5 planes, got {}", dims[2])));
    }
    let n = dims[0] * dims[1];
    let easting = r.f32s(n)?;
    let northing = r.f32s(n)?;
    let elevation = r.f32s(n)?;
    let values = r.f32s(n)?;
    let sigma_plane = r.f32s(n)?;
    r.finish()?;
    Ok(FieldMapFile {
        n_east: dims[0],
        n_north: dims[1],
        easting,
        northing,
        elevation,
        values,
        noise_sigma: sigma_plane.first().copied().unwrap_or(0.0),
    })
}

// -------------------------------------------------------------- checkpoints

fn objective_code(o: Objective) -> u8 {
    match o {
        Objective::FlowMatching => 0,
        Objective::Ddpm => 1,
    }
}

fn objective_from(code: u8, what: &str) -> Result<Objective> {
    match code {
        0 => Ok(Objective::FlowMatching),
        1 => Ok(Objective::Ddpm),
        other => Err(CliError::Data(format!("{what}: unknown objective code {other}"))),
    }
}

pub fn write_checkpoint(path: &Path, snap: &TrainSnapshot) -> Result<()> {
    let mut w = ByteWriter::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    w.u8(objective_code(snap.objective));
    w.u64(snap.step);
    w.bytes(&snap.rng_seed);
    w.u128(snap.rng_word_pos);
    w.f64(snap.adam_lr);
    w.f64(snap.adam_beta1);
    w.f64(snap.adam_beta2);
    w.f64(snap.adam_eps);
    w.u64(snap.adam_step);
    let c = &snap.config;
    for v in [
        c.state_channels,
        c.cond_channels,
        c.levels,
        c.base_channels,
        c.channel_mult,
        c.gn_groups,
        c.time_embed_dim,
        c.time_hidden_dim,
    ] {
        w.u32(v as u32);
    }
    w.u8(c.attention as u8);
    w.u32(snap.params.len() as u32);
    for t in &snap.params {
        w.str16(&t.name);
        w.u8(t.shape.len() as u8);
        for &d in &t.shape {
            w.u32(d as u32);
        }
        w.f32s(&t.data);
    }
    for buf in snap.adam_m.iter().chain(&snap.adam_v) {
        w.u64(buf.len() as u64);
        w.f32s(buf);
    }
    w.u32(snap.history.len() as u32);
    for line in &snap.history {
        w.u64(line.step);
        w.f64(line.wall_secs);
        w.f64(line.loss);
    }
    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<TrainSnapshot> {
    let raw = std::fs::read(path)?;
    let what = path.display().to_string();
    let mut r = ByteReader::new(&raw, &what);
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CliError::Data(format!("{what}: not a GCK1 checkpoint")));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::Data(format!("{what}: unsupported version {version}")));
    }
    let objective = objective_from(r.u8()?, &what)?;
    let step = r.u64()?;
    let rng_seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let rng_word_pos = r.u128()?;
    let adam_lr = r.f64()?;
    let adam_beta1 = r.f64()?;
    let adam_beta2 = r.f64()?;
    let adam_eps = r.f64()?;
    let adam_step = r.u64()?;
    let mut cfg_vals = [0usize; 8];
    for v in cfg_vals.iter_mut() {
        *v = r.u32()? as usize;
    }
    let attention = r.u8()? != 0;
    let config = UNetConfig {
        state_channels: cfg_vals[0],
        cond_channels: cfg_vals[1],
        levels: cfg_vals[2],
        base_channels: cfg_vals[3],
        channel_mult: cfg_vals[4],
        gn_groups: cfg_vals[5],
        time_embed_dim: cfg_vals[6],
        time_hidden_dim: cfg_vals[7],
        attention,
    };
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = r.str16()?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r.f32s(numel)?;
        params.push(NamedTensor { name, shape, data });
    }
    let mut moments = Vec::with_capacity(2 * n_params);
    for _ in 0..2 * n_params {
        let len = r.u64()? as usize;
        moments.push(r.f32s(len)?);
    }
    let adam_v = moments.split_off(n_params);
    let adam_m = moments;
    let n_history = r.u32()? as usize;
    let mut history = Vec::with_capacity(n_history);
    for _ in 0..n_history {
        history.push(LogLine { step: r.u64()?, wall_secs: r.f64()?, loss: r.f64()? });
    }
    r.finish()?;
    Ok(TrainSnapshot {
        config,
        objective,
        step,
        rng_seed,
        rng_word_pos,
        adam_lr,
        adam_beta1,
        adam_beta2,
        adam_eps,
        adam_step,
        params,
        adam_m,
        adam_v,
        history,
    })
}

// ------------------------------------------------------------- slice images

/// Binary PGM (P5), 8-bit grayscale.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(CliError::Config(format!(
            "pgm: {width}×{height} needs {} pixels, got {}",
            width * height,
            pixels.len()
        )));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    std::fs::write(path, &buf)?;
    Ok(())
}

/// One gray level per category, spread over the 8-bit range; 0 stays black.
pub fn category_gray(label: u8) -> u8 {
    label.saturating_mul(28)
}

/// The three axis-aligned mid-slices of a categorical volume, as
/// (axis name, width, height, pixels) — a pure function of the volume.
pub fn mid_slices(vol: &CategoricalVolume) -> [(&'static str, usize, usize, Vec<u8>); 3] {
    let d = vol.dims;
    let (mx, my, mz) = (d.nx / 2, d.ny / 2, d.nz / 2);
    let mut x_slice = Vec::with_capacity(d.ny * d.nz);
    for z in 0..d.nz {
        for y in 0..d.ny {
            x_slice.push(category_gray(vol.labels[d.index(mx, y, z)]));
        }
    }
    let mut y_slice = Vec::with_capacity(d.nx * d.nz);
    for z in 0..d.nz {
        for x in 0..d.nx {
            y_slice.push(category_gray(vol.labels[d.index(x, my, z)]));
        }
    }
    let mut z_slice = Vec::with_capacity(d.nx * d.ny);
    for y in 0..d.ny {
        for x in 0..d.nx {
            z_slice.push(category_gray(vol.labels[d.index(x, y, mz)]));
        }
    }
    [
        ("x", d.ny, d.nz, x_slice),
        ("y", d.nx, d.nz, y_slice),
        ("z", d.nx, d.ny, z_slice),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use stratagen_core::facies;

    #[test]
    fn categorical_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.gvl");
        let dims = GridDims::new(3, 4, 5);
        let mut labels = vec![facies::CONGLOMERATE; dims.count()];
        for x in 0..3 {
            for y in 0..4 {
                labels[dims.index(x, y, 0)] = facies::AIR;
            }
        }
        let vol = CategoricalVolume::from_labels(dims, labels).unwrap();
        write_categorical(&path, &vol).unwrap();
        assert_eq!(read_categorical(&path).unwrap(), vol);
    }

    #[test]
    fn condition_roundtrip_keeps_borehole_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.gvl");
        let dims = GridDims::new(4, 4, 4);
        let vol = CategoricalVolume::filled(dims, facies::IGNIMBRITE);
        let cond = stratagen_core::sparsity::sample_sparse(&vol, 3, 9).unwrap();
        write_condition(&path, &cond).unwrap();
        assert_eq!(read_condition(&path).unwrap(), cond);
    }

    #[test]
    fn corrupted_magic_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gvl");
        std::fs::write(&path, b"NOPE").unwrap();
        match read_categorical(&path) {
            Err(CliError::Data(_)) => {}
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.gvl");
        let vol = CategoricalVolume::filled(GridDims::cube(2), facies::AIR);
        write_categorical(&path, &vol).unwrap();
        assert!(read_condition(&path).is_err());
    }

    #[test]
    fn pgm_layout_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pgm");
        write_pgm(&path, 2, 2, &[0, 28, 56, 252]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"P5\n2 2\n255\n\x00\x1c\x38\xfc");
    }

    #[test]
    fn mid_slices_have_documented_orientation() {
        let dims = GridDims::new(2, 3, 4);
        let mut labels = vec![facies::CONGLOMERATE; dims.count()];
        for x in 0..2 {
            for y in 0..3 {
                labels[dims.index(x, y, 0)] = facies::AIR;
            }
        }
        let vol = CategoricalVolume::from_labels(dims, labels).unwrap();
        let [(xn, xw, xh, xs), (_, yw, yh, _), (_, zw, zh, zs)] = mid_slices(&vol);
        assert_eq!((xn, xw, xh), ("x", 3, 4));
        assert_eq!((yw, yh), (2, 4));
        assert_eq!((zw, zh), (2, 3));
        // Top row of the x slice is the air cap.
        assert!(xs[..3].iter().all(|&p| p == category_gray(facies::AIR)));
        // The z mid-slice (z=2) is below the surface.
        assert!(zs.iter().all(|&p| p == category_gray(facies::CONGLOMERATE)));
    }
}
