//! 1×1×1 convolution: a per-voxel linear map across channels.

use rand::Rng;

use super::uniform_init;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::VolumeTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseConvParams<T> {
    pub c_in: usize,
    pub c_out: usize,
    /// Row-major `c_out × c_in`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct PointwiseGrads<T> {
    pub input: VolumeTensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> PointwiseConvParams<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        PointwiseConvParams {
            c_in,
            c_out,
            weight: vec![T::zero(); c_in * c_out],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn new(c_in: usize, c_out: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if c_in == 0 || c_out == 0 || weight.len() != c_in * c_out || bias.len() != c_out {
            return Err(Error::shape(format!(
                "pointwise params: {c_out}×{c_in} weight needs {} values (got {}), bias {c_out} (got {})",
                c_in * c_out,
                weight.len(),
                bias.len()
            )));
        }
        Ok(PointwiseConvParams { c_in, c_out, weight, bias })
    }

    /// Identity map on `c` channels.
    pub fn identity(c: usize) -> Self {
        let mut p = Self::zeros(c, c);
        for i in 0..c {
            p.weight[i * c + i] = T::one();
        }
        p
    }

    /// Fan-in uniform init, zero bias.
    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        PointwiseConvParams {
            c_in,
            c_out,
            weight: uniform_init(rng, c_in, c_in * c_out),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn transposed(&self) -> Vec<T> {
        let mut wt = vec![T::zero(); self.weight.len()];
        for o in 0..self.c_out {
            for i in 0..self.c_in {
                wt[i * self.c_out + o] = self.weight[o * self.c_in + i];
            }
        }
        wt
    }
}

pub fn pointwise_forward<T: Scalar>(
    input: &VolumeTensor<T>,
    p: &PointwiseConvParams<T>,
) -> Result<VolumeTensor<T>> {
    let shape = input.shape();
    if shape.c != p.c_in {
        return Err(Error::shape(format!(
            "pointwise: input has {} channels, layer expects {}",
            shape.c, p.c_in
        )));
    }
    let wt = p.transposed();
    let (ci, co) = (p.c_in, p.c_out);
    let mut out = Vec::with_capacity(shape.voxels() * shape.n * co);
    for row in input.data().chunks_exact(ci) {
        let start = out.len();
        out.extend_from_slice(&p.bias);
        let acc = &mut out[start..];
        for (&xi, wrow) in row.iter().zip(wt.chunks_exact(co)) {
            if xi == T::zero() {
                continue;
            }
            for (a, &w) in acc.iter_mut().zip(wrow) {
                *a += w * xi;
            }
        }
    }
    VolumeTensor::from_vec(shape.with_channels(co), out)
}

pub fn pointwise_backward<T: Scalar>(
    input: &VolumeTensor<T>,
    p: &PointwiseConvParams<T>,
    grad_out: &VolumeTensor<T>,
) -> Result<PointwiseGrads<T>> {
    let shape = input.shape();
    if shape.c != p.c_in || grad_out.shape() != shape.with_channels(p.c_out) {
        return Err(Error::shape(format!(
            "pointwise backward: input {shape}, grad {} for {}→{}",
            grad_out.shape(),
            p.c_in,
            p.c_out
        )));
    }
    let (ci, co) = (p.c_in, p.c_out);
    let mut gx = vec![T::zero(); input.data().len()];
    let mut gw = vec![T::zero(); ci * co];
    let mut gb = vec![T::zero(); co];
    for ((xrow, grow), gxrow) in input
        .data()
        .chunks_exact(ci)
        .zip(grad_out.data().chunks_exact(co))
        .zip(gx.chunks_exact_mut(ci))
    {
        for (o, &g) in grow.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            gb[o] += g;
            let wrow = &p.weight[o * ci..(o + 1) * ci];
            let gwrow = &mut gw[o * ci..(o + 1) * ci];
            for ((gxi, gwi), (&w, &x)) in gxrow.iter_mut().zip(gwrow.iter_mut()).zip(wrow.iter().zip(xrow)) {
                *gxi += w * g;
                *gwi += x * g;
            }
        }
    }
    Ok(PointwiseGrads {
        input: VolumeTensor::from_vec(shape, gx)?,
        weight: gw,
        bias: gb,
    })
}
