//! Deterministic synthetic segmentation tasks.
//!
//! The volume is split into a 2×2 grid of blocks over (D, H), each spanning
//! the whole W extent. LongRange puts a spherical blob in block `t`; its
//! class is given only by the sign of a marker cube in block `t − 1`
//! (cyclically, block index `bd + 2·bh`). A decoy cube of the opposite
//! sign sits in block `t − 2`, so the intensity histogram of every sample
//! is the same whatever the class. LocalPattern blobs carry their class in
//! their own intensity band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};
use crate::training::Sample;

pub const NOISE_STD: f64 = 0.25;
pub const BLOB_MEAN: f64 = 1.0;
pub const MARKER_LEVEL: f64 = 2.0;
/// Intensity bands of the two LocalPattern classes.
pub const LOCAL_MEANS: [f64; 2] = [1.0, 2.5];
pub const MARKER_SIDE: usize = 4;
const MIN_RADIUS: usize = 3;
const MAX_RADIUS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LongRange,
    LocalPattern,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "longrange" => Ok(TaskKind::LongRange),
            "local" | "localpattern" => Ok(TaskKind::LocalPattern),
            _ => Err(Error::config(format!("unknown task `{s}` (longrange, local)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// (D, H, W).
    pub dims: (usize, usize, usize),
    pub num_classes: usize,
    pub seed: u64,
    pub count: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, seed: u64, count: usize) -> Self {
        TaskSpec { kind, dims: (32, 32, 16), num_classes: 3, seed, count }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h, w) = self.dims;
        if [d, h, w].iter().any(|&e| e == 0 || e % 16 != 0) {
            return Err(Error::config(format!("task dims {d}x{h}x{w} must be positive multiples of 16")));
        }
        if self.count == 0 {
            return Err(Error::config("task needs at least one sample"));
        }
        if self.num_classes != 3 {
            return Err(Error::config("synthetic tasks have exactly 3 classes (background + 2)"));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape5 {
        Shape5 { n: 1, d: self.dims.0, h: self.dims.1, w: self.dims.2, c: 1 }
    }
}

/// Geometry of one LongRange sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LongRangeLayout {
    pub target_block: usize,
    pub target_center: [usize; 3],
    pub radius: usize,
    /// Lower corner of the marker cube.
    pub marker_corner: [usize; 3],
    pub decoy_corner: [usize; 3],
    pub marker_sign: f64,
}

impl LongRangeLayout {
    pub fn class(&self) -> usize {
        if self.marker_sign > 0.0 {
            1
        } else {
            2
        }
    }

    pub fn flipped(&self) -> Self {
        LongRangeLayout { marker_sign: -self.marker_sign, ..self.clone() }
    }

    pub fn marker_center(&self) -> [f64; 3] {
        self.marker_corner.map(|v| v as f64 + (MARKER_SIDE as f64 - 1.0) / 2.0)
    }

    /// Euclidean distance between blob centre and marker centre.
    pub fn marker_distance(&self) -> f64 {
        let m = self.marker_center();
        (0..3).map(|i| (self.target_center[i] as f64 - m[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Half the largest spatial extent: the minimum blob–marker distance.
pub fn min_marker_distance(dims: (usize, usize, usize)) -> f64 {
    dims.0.max(dims.1).max(dims.2) as f64 / 2.0
}

fn sample_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * (1 << 20));
    rng
}

fn block_origin(dims: (usize, usize, usize), block: usize) -> [usize; 3] {
    [(block % 2) * dims.0 / 2, (block / 2) * dims.1 / 2, 0]
}

fn block_extent(dims: (usize, usize, usize)) -> [usize; 3] {
    [dims.0 / 2, dims.1 / 2, dims.2]
}

/// Draws the LongRange geometry of sample `index`. The class alternates
/// with the index so every even-sized set is exactly balanced.
pub fn long_range_layout(spec: &TaskSpec, index: usize) -> Result<LongRangeLayout> {
    spec.validate()?;
    let ext = block_extent(spec.dims);
    if ext.iter().any(|&e| e < 2 * MAX_RADIUS + 2 || e < MARKER_SIDE + 2) {
        return Err(Error::config("task dims too small to separate marker and target"));
    }
    let min_dist = min_marker_distance(spec.dims);
    let mut rng = sample_rng(spec.seed, index, 1);
    let target_block = rng.gen_range(0..4);
    let radius = rng.gen_range(MIN_RADIUS..=MAX_RADIUS);
    let t0 = block_origin(spec.dims, target_block);
    let m0 = block_origin(spec.dims, (target_block + 3) % 4);
    let d0 = block_origin(spec.dims, (target_block + 2) % 4);
    for _ in 0..1000 {
        let target_center: [usize; 3] = std::array::from_fn(|i| t0[i] + rng.gen_range(radius..ext[i] - radius));
        let marker_corner: [usize; 3] = std::array::from_fn(|i| m0[i] + rng.gen_range(0..=ext[i] - MARKER_SIDE));
        let decoy_corner: [usize; 3] = std::array::from_fn(|i| d0[i] + rng.gen_range(0..=ext[i] - MARKER_SIDE));
        let marker_sign = if (index as u64 + spec.seed) % 2 == 0 { 1.0 } else { -1.0 };
        let layout = LongRangeLayout { target_block, target_center, radius, marker_corner, decoy_corner, marker_sign };
        if layout.marker_distance() > min_dist {
            return Ok(layout);
        }
    }
    Err(Error::config("could not place marker far enough from the target"))
}

fn in_sphere(p: [usize; 3], c: [usize; 3], r: usize) -> bool {
    let d2: i64 = (0..3).map(|i| (p[i] as i64 - c[i] as i64).pow(2)).sum();
    d2 <= (r * r) as i64
}

fn in_cube(p: [usize; 3], corner: [usize; 3]) -> bool {
    (0..3).all(|i| p[i] >= corner[i] && p[i] < corner[i] + MARKER_SIDE)
}

/// Renders a layout with the noise stream of sample `index`.
pub fn render_long_range<T: Scalar>(spec: &TaskSpec, layout: &LongRangeLayout, index: usize) -> Result<Sample<T>> {
    let shape = spec.shape();
    let mut rng = sample_rng(spec.seed, index, 2);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let class = layout.class() as f64;
    let mut image = Vec::with_capacity(shape.len());
    let mut label = Vec::with_capacity(shape.len());
    for x in 0..shape.d {
        for y in 0..shape.h {
            for z in 0..shape.w {
                let p = [x, y, z];
                let e: f64 = noise.sample(&mut rng);
                let (v, l) = if in_sphere(p, layout.target_center, layout.radius) {
                    (BLOB_MEAN + e, class)
                } else if in_cube(p, layout.marker_corner) {
                    (layout.marker_sign * MARKER_LEVEL + e, 0.0)
                } else if in_cube(p, layout.decoy_corner) {
                    (-layout.marker_sign * MARKER_LEVEL + e, 0.0)
                } else {
                    (e, 0.0)
                };
                image.push(T::from_f64_lossy(v));
                label.push(T::from_f64_lossy(l));
            }
        }
    }
    Ok(Sample { image: VolumeTensor::from_vec(shape, image)?, label: VolumeTensor::from_vec(shape, label)? })
}

pub fn gen_long_range<T: Scalar>(spec: &TaskSpec) -> Result<Vec<Sample<T>>> {
    (0..spec.count)
        .map(|i| render_long_range(spec, &long_range_layout(spec, i)?, i))
        .collect()
}

/// Two blobs in distinct blocks, each labelled by its own intensity band.
pub fn gen_local_pattern<T: Scalar>(spec: &TaskSpec) -> Result<Vec<Sample<T>>> {
    spec.validate()?;
    let shape = spec.shape();
    let ext = block_extent(spec.dims);
    if ext.iter().any(|&e| e < 2 * MAX_RADIUS + 2) {
        return Err(Error::config("task dims too small for the blobs"));
    }
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let mut out = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let mut rng = sample_rng(spec.seed, index, 1);
        let first = rng.gen_range(0..4);
        let second = (first + rng.gen_range(1..4)) % 4;
        let blobs: Vec<([usize; 3], usize, usize)> = [first, second]
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let o = block_origin(spec.dims, b);
                let r = rng.gen_range(MIN_RADIUS..=MAX_RADIUS);
                let c = std::array::from_fn(|i| o[i] + rng.gen_range(r..ext[i] - r));
                // alternate so both classes appear equally often
                let class = 1 + (index + j + spec.seed as usize) % 2;
                (c, r, class)
            })
            .collect();
        let mut nrng = sample_rng(spec.seed, index, 2);
        let mut image = Vec::with_capacity(shape.len());
        let mut label = Vec::with_capacity(shape.len());
        for x in 0..shape.d {
            for y in 0..shape.h {
                for z in 0..shape.w {
                    let e: f64 = noise.sample(&mut nrng);
                    let hit = blobs.iter().find(|(c, r, _)| in_sphere([x, y, z], *c, *r));
                    let (v, l) = match hit {
                        Some(&(_, _, k)) => (LOCAL_MEANS[k - 1] + e, k as f64),
                        None => (e, 0.0),
                    };
                    image.push(T::from_f64_lossy(v));
                    label.push(T::from_f64_lossy(l));
                }
            }
        }
        out.push(Sample { image: VolumeTensor::from_vec(shape, image)?, label: VolumeTensor::from_vec(shape, label)? });
    }
    Ok(out)
}

pub fn generate<T: Scalar>(spec: &TaskSpec) -> Result<Vec<Sample<T>>> {
    match spec.kind {
        TaskKind::LongRange => gen_long_range(spec),
        TaskKind::LocalPattern => gen_local_pattern(spec),
    }
}
