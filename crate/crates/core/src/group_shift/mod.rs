//! Group shift: a parameter-free permutation of a feature map.
//!
//! The spatial volume is cut into `g_d × g_h × g_w` equal blocks (spatial
//! groups). The first `C_s` channels are split into one channel group of
//! `C_g` channels per spatial group. Channel group `k` is moved `k` spatial
//! groups forward (cyclically, in spatial-group index order), keeping its
//! within-block offset and its channel index. Channels `C_s..C` stay put.
//!
//! Spatial-group indices are linearised with the depth-group index varying
//! fastest, then height, then width.

mod table;
pub mod verify;

pub use table::{
    apply_permutation, build_permutation, group_shift_backward, invert_permutation,
    PermutationTable,
};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Coord5, Shape5, VolumeTensor};

/// Number of spatial groups along depth, height and width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialGroups {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl SpatialGroups {
    pub const ONE: SpatialGroups = SpatialGroups { d: 1, h: 1, w: 1 };

    pub const fn new(d: usize, h: usize, w: usize) -> Self {
        SpatialGroups { d, h, w }
    }

    /// Total number of spatial groups `G`.
    pub fn count(&self) -> usize {
        self.d * self.h * self.w
    }
}

impl From<(usize, usize, usize)> for SpatialGroups {
    fn from((d, h, w): (usize, usize, usize)) -> Self {
        SpatialGroups { d, h, w }
    }
}

impl std::fmt::Display for SpatialGroups {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.d, self.h, self.w)
    }
}

/// Unbound group shift settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupShiftConfig {
    pub groups: SpatialGroups,
    /// Channels per channel group, `C_g`.
    pub channels_per_group: usize,
    /// Shifted channel count, `C_s = G·C_g`.
    pub shifted: usize,
}

impl GroupShiftConfig {
    /// Config with `C_s = G·C_g`.
    pub fn new(groups: impl Into<SpatialGroups>, channels_per_group: usize) -> Result<Self> {
        let groups = groups.into();
        let shifted = groups.count() * channels_per_group;
        Self::with_shifted(groups, channels_per_group, shifted)
    }

    /// Config with an explicit `C_s`, which must equal `G·C_g`.
    pub fn with_shifted(
        groups: impl Into<SpatialGroups>,
        channels_per_group: usize,
        shifted: usize,
    ) -> Result<Self> {
        let groups = groups.into();
        if groups.d == 0 || groups.h == 0 || groups.w == 0 {
            return Err(Error::config(format!("group counts must be >= 1, got {groups}")));
        }
        if shifted != groups.count() * channels_per_group {
            return Err(Error::config(format!(
                "shifted channels {shifted} != G·C_g = {}·{channels_per_group}",
                groups.count()
            )));
        }
        Ok(GroupShiftConfig { groups, channels_per_group, shifted })
    }

    /// Derives `C_g = floor(C·fraction / G)` for a feature map with
    /// `channels` channels. A positive fraction that rounds to `C_g = 0`
    /// is rejected.
    pub fn from_fraction(
        groups: impl Into<SpatialGroups>,
        channels: usize,
        fraction: Ratio<usize>,
    ) -> Result<Self> {
        let groups = groups.into();
        if fraction > Ratio::from_integer(1) {
            return Err(Error::config(format!("shift fraction {fraction} exceeds 1")));
        }
        let g = groups.count();
        let cg = (Ratio::from_integer(channels) * fraction / Ratio::from_integer(g.max(1))).to_integer();
        if cg == 0 && *fraction.numer() != 0 {
            return Err(Error::config(format!(
                "{channels} channels × {fraction} cannot be split into {g} channel groups (C_g = 0)"
            )));
        }
        Self::new(groups, cg)
    }

    /// Checks the config against per-sample dims and derives block extents.
    pub fn bind(&self, dims: Shape5) -> Result<BoundGroupShift> {
        let g = self.groups;
        for (axis, extent, count) in [("D", dims.d, g.d), ("H", dims.h, g.h), ("W", dims.w, g.w)] {
            if count == 0 || extent % count != 0 {
                return Err(Error::config(format!(
                    "axis {axis}: extent {extent} not divisible by {count} spatial groups"
                )));
            }
        }
        if self.shifted > dims.c {
            return Err(Error::config(format!(
                "shifted channels {} exceed channel count {}",
                self.shifted, dims.c
            )));
        }
        Ok(BoundGroupShift {
            cfg: *self,
            dims: dims.with_batch(1),
            block: (dims.d / g.d, dims.h / g.h, dims.w / g.w),
        })
    }
}

/// A config validated against concrete per-sample dims.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundGroupShift {
    cfg: GroupShiftConfig,
    dims: Shape5,
    block: (usize, usize, usize),
}

impl BoundGroupShift {
    pub fn config(&self) -> &GroupShiftConfig {
        &self.cfg
    }

    /// Per-sample dims (`N = 1`).
    pub fn dims(&self) -> Shape5 {
        self.dims
    }

    /// Block extents `(d, h, w)`.
    pub fn block(&self) -> (usize, usize, usize) {
        self.block
    }

    pub fn kept(&self) -> usize {
        self.dims.c - self.cfg.shifted
    }

    pub fn group_count(&self) -> usize {
        self.cfg.groups.count()
    }

    /// Spatial-group index of a voxel.
    pub fn spatial_group(&self, x: usize, y: usize, z: usize) -> usize {
        let g = self.cfg.groups;
        let (d, h, w) = self.block;
        x / d + (y / h) * g.d + (z / w) * g.d * g.h
    }

    /// Where the element at `src` lands after the shift.
    pub fn map_coordinate(&self, src: Coord5) -> Result<Coord5> {
        let dims = self.dims;
        if src.x >= dims.d || src.y >= dims.h || src.z >= dims.w || src.c >= dims.c {
            return Err(Error::Bounds(format!(
                "({},{},{},{}) outside per-sample dims {dims}",
                src.x, src.y, src.z, src.c
            )));
        }
        Ok(self.map_unchecked(src))
    }

    #[inline]
    pub(crate) fn map_unchecked(&self, src: Coord5) -> Coord5 {
        if src.c >= self.cfg.shifted {
            return src;
        }
        let g = self.cfg.groups;
        let (d, h, w) = self.block;
        let cur = self.spatial_group(src.x, src.y, src.z);
        let step = src.c / self.cfg.channels_per_group;
        let to = (cur + step) % g.count();
        Coord5 {
            n: src.n,
            x: (to % g.d) * d + src.x % d,
            y: ((to % (g.d * g.h)) / g.d) * h + src.y % h,
            z: (to / (g.d * g.h)) * w + src.z % w,
            c: src.c,
        }
    }
}

/// Direct scatter over every element; the reference implementation.
pub fn apply_group_shift_naive<T: Scalar>(
    input: &VolumeTensor<T>,
    cfg: &GroupShiftConfig,
) -> Result<VolumeTensor<T>> {
    let shape = input.shape();
    let bound = cfg.bind(shape)?;
    let src_data = input.data();
    let mut out = vec![T::default(); shape.len()];
    for n in 0..shape.n {
        for x in 0..shape.d {
            for y in 0..shape.h {
                for z in 0..shape.w {
                    for c in 0..shape.c {
                        let src = Coord5 { n, x, y, z, c };
                        let dst = bound.map_unchecked(src);
                        out[linear(dst, shape)] = src_data[linear(src, shape)];
                    }
                }
            }
        }
    }
    VolumeTensor::from_vec(shape, out)
}

#[inline]
pub(crate) fn linear(at: Coord5, s: Shape5) -> usize {
    at.c + s.c * (at.z + s.w * (at.y + s.h * (at.x + s.d * at.n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(d: usize, h: usize, w: usize, c: usize) -> Shape5 {
        Shape5::new(1, d, h, w, c).unwrap()
    }

    #[test]
    fn hand_evaluated_shift() {
        let cfg = GroupShiftConfig::with_shifted((2, 1, 1), 1, 2).unwrap();
        let b = cfg.bind(dims(4, 2, 2, 4)).unwrap();
        let dst = b.map_coordinate(Coord5::new(0, 0, 0, 0, 1)).unwrap();
        assert_eq!(dst, Coord5::new(0, 2, 0, 0, 1));
    }

    #[test]
    fn kept_channels_and_first_group_are_fixed() {
        let cfg = GroupShiftConfig::new((2, 2, 1), 2).unwrap();
        let b = cfg.bind(dims(4, 4, 2, 12)).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..2 {
                    for c in [0, 1, cfg.shifted + 1, 11] {
                        let p = Coord5::new(0, x, y, z, c);
                        assert_eq!(b.map_coordinate(p).unwrap(), p);
                    }
                }
            }
        }
    }

    #[test]
    fn bind_names_offending_axis() {
        let cfg = GroupShiftConfig::new((1, 3, 1), 1).unwrap();
        let err = cfg.bind(dims(4, 4, 4, 4)).unwrap_err().to_string();
        assert!(err.contains("axis H"), "{err}");
        let cfg = GroupShiftConfig::new((2, 2, 2), 1).unwrap();
        assert!(cfg.bind(dims(2, 2, 2, 4)).is_err(), "C_s = 8 > C = 4");
    }

    #[test]
    fn inconsistent_shift_count_rejected() {
        assert!(GroupShiftConfig::with_shifted((2, 1, 1), 2, 3).is_err());
        assert!(GroupShiftConfig::new((0, 1, 1), 1).is_err());
    }

    #[test]
    fn fraction_rounding() {
        let half = Ratio::new(1, 2);
        let c = GroupShiftConfig::from_fraction((2, 2, 2), 16, half).unwrap();
        assert_eq!((c.channels_per_group, c.shifted), (1, 8));
        let c = GroupShiftConfig::from_fraction((2, 2, 1), 10, half).unwrap();
        assert_eq!((c.channels_per_group, c.shifted), (1, 4));
        assert!(GroupShiftConfig::from_fraction((4, 4, 1), 16, half).is_err());
        let none = GroupShiftConfig::from_fraction((4, 4, 1), 16, Ratio::from_integer(0)).unwrap();
        assert_eq!(none.shifted, 0);
    }

    #[test]
    fn out_of_range_coordinate() {
        let b = GroupShiftConfig::new((1, 1, 1), 1).unwrap().bind(dims(2, 2, 2, 2)).unwrap();
        assert!(matches!(b.map_coordinate(Coord5::new(0, 2, 0, 0, 0)), Err(Error::Bounds(_))));
    }

    #[test]
    fn naive_identity_cases() {
        let s = Shape5::new(2, 4, 2, 2, 4).unwrap();
        let t = VolumeTensor::from_fn(s, |p| linear(p, s) as f64);
        let zero = GroupShiftConfig::new((2, 1, 1), 0).unwrap();
        assert_eq!(apply_group_shift_naive(&t, &zero).unwrap(), t);
        let single = GroupShiftConfig::new((1, 1, 1), 4).unwrap();
        assert_eq!(apply_group_shift_naive(&t, &single).unwrap(), t);
    }
}
