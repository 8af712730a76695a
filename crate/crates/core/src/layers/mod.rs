//! Differentiable building blocks with hand-written backward passes.

pub mod conv3;
pub mod norm;
pub mod pointwise;
pub mod pool;

pub use conv3::{conv3_backward, conv3_forward, Conv3Grads, Conv3Params};
pub use norm::{norm_backward, norm_forward, NormCache, NormGrads, NormParams};
pub use pointwise::{pointwise_backward, pointwise_forward, PointwiseConvParams, PointwiseGrads};
pub use pool::{avgpool2_backward, avgpool2_forward, upsample2_backward, upsample2_forward};

use rand::Rng;

use crate::scalar::Scalar;

/// Zero-mean uniform weights with bound `sqrt(6 / fan_in)`.
pub fn uniform_init<T: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, count: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..count)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect()
}

/// Multiplies `grad` by the ReLU mask of the forward *output* (ReLU output
/// is positive exactly where its input was).
pub fn relu_backward_inplace<T: Scalar>(grad: &mut [T], relu_out: &[T]) {
    for (g, &y) in grad.iter_mut().zip(relu_out) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}
