//! Group shift pointwise convolution for volumetric segmentation.
//!
//! The crate provides a parameter-free group shift permutation, pure
//! pointwise 3D U-Nets built around it, desk-scale training with Dice loss
//! and a poly learning-rate schedule, synthetic tasks and an exact
//! parameter/FLOP profiler.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 64-bit variants used for training and gradient checks.

pub mod error;
pub mod gradcheck;
pub mod group_shift;
pub mod io;
pub mod layers;
pub mod network;
pub mod profiler;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use network::{build_network, GsInsertPosition, GsPlacement, NetworkSpec, SpatialGroupPreset};
pub use group_shift::{
    apply_group_shift_naive, apply_permutation, build_permutation, group_shift_backward,
    invert_permutation, GroupShiftConfig, PermutationTable, SpatialGroups,
};
pub use scalar::Scalar;
pub use tensor::{linear_index, Coord5, Shape5, VolumeTensor};

/// 64-bit volume, the default everywhere.
pub type Volume = VolumeTensor<f64>;
/// 32-bit volume, for storage and inference.
pub type Volume32 = VolumeTensor<f32>;
pub type Network64 = network::Network<f64>;
pub type Network32 = network::Network<f32>;
pub type Sample64 = training::Sample<f64>;
/// Exact shift fractions such as `1/2`.
pub type Fraction = num_rational::Ratio<usize>;
