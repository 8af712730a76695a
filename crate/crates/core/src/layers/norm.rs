//! Per-sample, per-channel normalisation over the spatial extent, followed
//! by a learned scale and shift.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::VolumeTensor;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> NormParams<T> {
    /// Unit scale, zero shift.
    pub fn new(channels: usize) -> Self {
        NormParams {
            scale: vec![T::one(); channels],
            shift: vec![T::zero(); channels],
            eps: T::from_f64_lossy(DEFAULT_EPS),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn param_count(&self) -> usize {
        2 * self.scale.len()
    }
}

/// What the backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    /// Normalised input before scale/shift.
    pub normalized: VolumeTensor<T>,
    /// `1/sqrt(var + eps)` per (sample, channel).
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct NormGrads<T> {
    pub input: VolumeTensor<T>,
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

pub fn norm_forward<T: Scalar>(
    input: &VolumeTensor<T>,
    p: &NormParams<T>,
) -> Result<(VolumeTensor<T>, NormCache<T>)> {
    let s = input.shape();
    if s.c != p.channels() {
        return Err(Error::shape(format!(
            "norm: input has {} channels, params have {}",
            s.c,
            p.channels()
        )));
    }
    if p.eps <= T::zero() {
        return Err(Error::config("norm epsilon must be positive"));
    }
    let c = s.c;
    let count = T::from_usize(s.voxels()).unwrap();
    let mut out = vec![T::zero(); input.data().len()];
    let mut xhat = vec![T::zero(); input.data().len()];
    let mut inv_std = Vec::with_capacity(s.n * c);
    for n in 0..s.n {
        let x = input.sample(n);
        let mut mean = vec![T::zero(); c];
        for row in x.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        let mut var = vec![T::zero(); c];
        for row in x.chunks_exact(c) {
            for ((acc, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v / count + p.eps).sqrt()).collect();
        let base = n * s.sample_len();
        for (r, row) in x.chunks_exact(c).enumerate() {
            let o = base + r * c;
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv[ch];
                xhat[o + ch] = h;
                out[o + ch] = p.scale[ch] * h + p.shift[ch];
            }
        }
        inv_std.extend(inv);
    }
    Ok((
        VolumeTensor::from_vec(s, out)?,
        NormCache { normalized: VolumeTensor::from_vec(s, xhat)?, inv_std },
    ))
}

pub fn norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    p: &NormParams<T>,
    grad_out: &VolumeTensor<T>,
) -> Result<NormGrads<T>> {
    let s = cache.normalized.shape();
    if grad_out.shape() != s {
        return Err(Error::shape(format!("norm backward: grad {} vs {s}", grad_out.shape())));
    }
    let c = s.c;
    let m = T::from_usize(s.voxels()).unwrap();
    let mut gx = vec![T::zero(); grad_out.data().len()];
    let mut gscale = vec![T::zero(); c];
    let mut gshift = vec![T::zero(); c];
    for n in 0..s.n {
        let g = grad_out.sample(n);
        let h = cache.normalized.sample(n);
        // Per channel: Σ dxhat and Σ dxhat·xhat.
        let mut sum_d = vec![T::zero(); c];
        let mut sum_dh = vec![T::zero(); c];
        for (grow, hrow) in g.chunks_exact(c).zip(h.chunks_exact(c)) {
            for ch in 0..c {
                gshift[ch] += grow[ch];
                gscale[ch] += grow[ch] * hrow[ch];
                let d = grow[ch] * p.scale[ch];
                sum_d[ch] += d;
                sum_dh[ch] += d * hrow[ch];
            }
        }
        let inv = &cache.inv_std[n * c..(n + 1) * c];
        let base = n * s.sample_len();
        for (r, (grow, hrow)) in g.chunks_exact(c).zip(h.chunks_exact(c)).enumerate() {
            for ch in 0..c {
                let d = grow[ch] * p.scale[ch];
                gx[base + r * c + ch] = inv[ch] / m * (m * d - sum_d[ch] - hrow[ch] * sum_dh[ch]);
            }
        }
    }
    Ok(NormGrads { input: VolumeTensor::from_vec(s, gx)?, scale: gscale, shift: gshift })
}
