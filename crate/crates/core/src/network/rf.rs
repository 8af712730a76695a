//! Empirical receptive field: which input voxels a given output voxel
//! depends on, read off the input gradient.

use std::collections::BTreeSet;

use super::flat::FlatStack;
use super::graph::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Coord5, VolumeTensor};

/// Gradient magnitude above which an input voxel counts as supporting.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Something that can return the gradient of a scalar readout with respect
/// to its input.
pub trait InputGradient<T> {
    fn forward_recorded(&mut self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>>;
    fn input_gradient(&mut self, grad_out: &VolumeTensor<T>) -> Result<VolumeTensor<T>>;
}

impl<T: Scalar> InputGradient<T> for Network<T> {
    fn forward_recorded(&mut self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.forward(x)
    }

    fn input_gradient(&mut self, grad_out: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.backward(grad_out).map(|g| g.input)
    }
}

impl<T: Scalar> InputGradient<T> for FlatStack<T> {
    fn forward_recorded(&mut self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.forward(x)
    }

    fn input_gradient(&mut self, grad_out: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.backward(grad_out).map(|(g, _)| g)
    }
}

/// Spatial positions `(x, y, z)` of `input` (a single sample) whose
/// gradient of the summed outputs at `voxel` exceeds [`SUPPORT_THRESHOLD`].
pub fn effective_rf_support<T: Scalar, M: InputGradient<T>>(
    model: &mut M,
    input: &VolumeTensor<T>,
    voxel: (usize, usize, usize),
) -> Result<BTreeSet<(usize, usize, usize)>> {
    if input.shape().n != 1 {
        return Err(Error::shape("receptive-field probe takes a single sample"));
    }
    let out = model.forward_recorded(input)?;
    let os = out.shape();
    let mut seed = VolumeTensor::zeros(os);
    for c in 0..os.c {
        seed.set(Coord5::new(0, voxel.0, voxel.1, voxel.2, c), T::one())?;
    }
    let g = model.input_gradient(&seed)?;
    let s = g.shape();
    let threshold = T::from_f64_lossy(SUPPORT_THRESHOLD);
    let mut support = BTreeSet::new();
    for (row_idx, row) in g.data().chunks_exact(s.c).enumerate() {
        if row.iter().any(|v| v.abs() > threshold) {
            let p = s.coord_of(row_idx * s.c);
            support.insert((p.x, p.y, p.z));
        }
    }
    Ok(support)
}
