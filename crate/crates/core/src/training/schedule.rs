use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Poly schedule: `base_lr · (1 − iter/max_iters)^power`.
pub fn poly_lr(iter: usize, max_iters: usize, base_lr: f64, power: f64) -> Result<f64> {
    if max_iters == 0 || iter > max_iters {
        return Err(Error::Argument(format!("iteration {iter} outside 0..={max_iters}")));
    }
    Ok(base_lr * (1.0 - iter as f64 / max_iters as f64).powf(power))
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn zeros_like(sizes: impl IntoIterator<Item = usize>) -> Self {
        SgdState { velocity: sizes.into_iter().map(|n| vec![T::zero(); n]).collect() }
    }
}

/// `v ← momentum·v + g; p ← p − lr·v` for every tensor. Every gradient is
/// checked for finiteness before anything is modified.
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut [T]],
    names: &[String],
    grads: &[Vec<T>],
    lr: T,
    momentum: T,
    state: &mut SgdState<T>,
) -> Result<()> {
    if params.len() != grads.len() || state.velocity.len() != grads.len() {
        return Err(Error::shape(format!(
            "sgd: {} parameter tensors, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        if p.len() != g.len() || state.velocity[i].len() != g.len() {
            return Err(Error::shape(format!("sgd: size mismatch for `{name}`")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
