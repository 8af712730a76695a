use std::sync::Arc;

use rayon::prelude::*;

use super::{linear, BoundGroupShift, GroupShiftConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

const UNSET: usize = usize::MAX;

/// Precomputed gather map for one per-sample shape: `map[dst] = src`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationTable {
    dims: Shape5,
    map: Arc<[usize]>,
}

impl PermutationTable {
    /// Wraps an explicit map after checking it is a bijection.
    pub fn from_map(dims: Shape5, map: Vec<usize>) -> Result<Self> {
        let dims = dims.with_batch(1);
        if map.len() != dims.len() {
            return Err(Error::shape(format!(
                "table length {} does not match per-sample size {}",
                map.len(),
                dims.len()
            )));
        }
        let table = PermutationTable { dims, map: map.into() };
        if !table.is_bijective() {
            return Err(Error::config("permutation table is not a bijection"));
        }
        Ok(table)
    }

    /// Builds without validation. Only for exercising failure paths.
    #[doc(hidden)]
    pub fn from_map_unchecked(dims: Shape5, map: Vec<usize>) -> Self {
        PermutationTable { dims: dims.with_batch(1), map: map.into() }
    }

    pub fn identity(dims: Shape5) -> Self {
        let dims = dims.with_batch(1);
        PermutationTable { dims, map: (0..dims.len()).collect() }
    }

    /// Per-sample dims the table was built for (`N = 1`).
    pub fn dims(&self) -> Shape5 {
        self.dims
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn is_bijective(&self) -> bool {
        let mut seen = vec![false; self.map.len()];
        for &s in self.map.iter() {
            if s >= seen.len() || seen[s] {
                return false;
            }
            seen[s] = true;
        }
        true
    }

    /// `self` applied after `first`: gathering with the result equals
    /// gathering with `first` and then with `self`.
    pub fn compose(&self, first: &PermutationTable) -> Result<PermutationTable> {
        if self.dims != first.dims {
            return Err(Error::shape(format!(
                "compose: table dims {} vs {}",
                self.dims, first.dims
            )));
        }
        let map: Vec<usize> = self.map.iter().map(|&mid| first.map[mid]).collect();
        Ok(PermutationTable { dims: self.dims, map: map.into() })
    }
}

/// Precomputes the gather table for `cfg` at per-sample dims `dims`.
pub fn build_permutation(cfg: &GroupShiftConfig, dims: Shape5) -> Result<PermutationTable> {
    let bound = cfg.bind(dims)?;
    Ok(build_bound(&bound))
}

pub(crate) fn build_bound(bound: &BoundGroupShift) -> PermutationTable {
    let dims = bound.dims();
    let mut map = vec![UNSET; dims.len()];
    for src in 0..dims.len() {
        let at = dims.coord_of(src);
        let dst = linear(bound.map_unchecked(at), dims);
        assert_eq!(map[dst], UNSET, "group shift table collision at {dst}");
        map[dst] = src;
    }
    assert!(map.iter().all(|&s| s != UNSET), "group shift table has holes");
    PermutationTable { dims, map: map.into() }
}

/// Gathers every batch sample of `input` through `table`.
pub fn apply_permutation<T: Scalar>(
    input: &VolumeTensor<T>,
    table: &PermutationTable,
) -> Result<VolumeTensor<T>> {
    let shape = input.shape();
    if shape.with_batch(1) != table.dims {
        return Err(Error::shape(format!(
            "table built for {} cannot be applied to {}",
            table.dims, shape
        )));
    }
    let per = table.dims.len();
    let src = input.data();
    let map = &table.map;
    let mut out = vec![T::zero(); shape.len()];
    out.par_chunks_mut(per)
        .zip(src.par_chunks(per))
        .for_each(|(dst, sample)| {
            for (o, &s) in dst.iter_mut().zip(map.iter()) {
                *o = sample[s];
            }
        });
    VolumeTensor::from_vec(shape, out)
}

pub fn invert_permutation(table: &PermutationTable) -> PermutationTable {
    let mut inv = vec![0; table.map.len()];
    for (dst, &src) in table.map.iter().enumerate() {
        inv[src] = dst;
    }
    PermutationTable { dims: table.dims, map: inv.into() }
}

/// Adjoint of [`apply_permutation`] for the same `table`.
pub fn group_shift_backward<T: Scalar>(
    grad_out: &VolumeTensor<T>,
    table: &PermutationTable,
) -> Result<VolumeTensor<T>> {
    apply_permutation(grad_out, &invert_permutation(table))
}
