//! Softmax and the soft Dice loss.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::VolumeTensor;

/// Smoothing term in the Dice denominator.
pub const DICE_EPS: f64 = 1e-5;

/// Per-voxel softmax over the channel axis, stabilised by the row maximum.
pub fn softmax_channels<T: Scalar>(logits: &VolumeTensor<T>) -> VolumeTensor<T> {
    let s = logits.shape();
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(s.c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / z);
    }
    VolumeTensor::from_vec(s, out).expect("same shape")
}

/// Back-propagates a gradient with respect to softmax outputs to the logits.
pub fn softmax_backward<T: Scalar>(probs: &VolumeTensor<T>, grad_probs: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
    let s = probs.shape();
    if grad_probs.shape() != s {
        return Err(Error::shape(format!("softmax backward: {} vs {s}", grad_probs.shape())));
    }
    let mut out = vec![T::zero(); s.len()];
    for ((o, p), g) in out
        .chunks_exact_mut(s.c)
        .zip(probs.data().chunks_exact(s.c))
        .zip(grad_probs.data().chunks_exact(s.c))
    {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((oi, &pi), &gi) in o.iter_mut().zip(p).zip(g) {
            *oi = pi * (gi - dot);
        }
    }
    VolumeTensor::from_vec(s, out)
}

/// One-hot encodes a single-channel label volume holding class ids.
pub fn one_hot<T: Scalar>(labels: &VolumeTensor<T>, classes: usize) -> Result<VolumeTensor<T>> {
    let s = labels.shape();
    if s.c != 1 {
        return Err(Error::shape(format!("labels must have one channel, got {s}")));
    }
    let mut out = vec![T::zero(); s.voxels() * s.n * classes];
    for (i, &v) in labels.data().iter().enumerate() {
        let k = class_id(v, classes)?;
        out[i * classes + k] = T::one();
    }
    VolumeTensor::from_vec(s.with_channels(classes), out)
}

pub(crate) fn class_id<T: Scalar>(v: T, classes: usize) -> Result<usize> {
    let k = v.to_f64_lossy();
    if k < 0.0 || k.fract() != 0.0 || k as usize >= classes {
        return Err(Error::Argument(format!("label value {k} is not a class id below {classes}")));
    }
    Ok(k as usize)
}

/// Soft Dice over the foreground classes `1..K`, summed over the whole
/// batch: `dice_k = 2·Σ p_k g_k / (Σ p_k² + Σ g_k² + ε)` and
/// `loss = 1 − mean_k dice_k`. Returns the loss and `∂loss/∂probs`.
pub fn dice_loss<T: Scalar>(probs: &VolumeTensor<T>, target: &VolumeTensor<T>) -> Result<(T, VolumeTensor<T>)> {
    let s = probs.shape();
    if target.shape() != s {
        return Err(Error::shape(format!("dice: probs {s} vs target {}", target.shape())));
    }
    if s.c < 2 {
        return Err(Error::shape("dice needs at least one foreground class"));
    }
    let k = s.c;
    let mut inter = vec![T::zero(); k];
    let mut denom = vec![lit::<T>(DICE_EPS); k];
    for (p, g) in probs.data().chunks_exact(k).zip(target.data().chunks_exact(k)) {
        for c in 1..k {
            inter[c] += p[c] * g[c];
            denom[c] += p[c] * p[c] + g[c] * g[c];
        }
    }
    let fg = lit::<T>((k - 1) as f64);
    let two = lit::<T>(2.0);
    let dice_sum: T = (1..k).map(|c| two * inter[c] / denom[c]).sum();
    let loss = T::one() - dice_sum / fg;

    // d dice_c / d p_c = 2·(g·D − I·2p) / D²
    let mut grad = vec![T::zero(); s.len()];
    for ((o, p), g) in grad
        .chunks_exact_mut(k)
        .zip(probs.data().chunks_exact(k))
        .zip(target.data().chunks_exact(k))
    {
        for c in 1..k {
            let d = denom[c];
            let dd = two * (g[c] * d - inter[c] * two * p[c]) / (d * d);
            o[c] = -dd / fg;
        }
    }
    Ok((loss, VolumeTensor::from_vec(s, grad)?))
}
