//! Dense rank-5 volume storage.
//!
//! Every tensor in the crate uses the same element order: batch-major, then
//! depth, height, width, with channels varying fastest. A pointwise
//! convolution is therefore a plain row-major matrix product over
//! `N·D·H·W` rows of `C` columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Extents `(N, D, H, W, C)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape5 {
    pub n: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

/// Coordinates `(n, x, y, z, c)` with `x` along depth, `y` along height and
/// `z` along width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Coord5 {
    pub n: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub c: usize,
}

impl Coord5 {
    pub const fn new(n: usize, x: usize, y: usize, z: usize, c: usize) -> Self {
        Coord5 { n, x, y, z, c }
    }
}

impl Shape5 {
    pub fn new(n: usize, d: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        let s = Shape5 { n, d, h, w, c };
        s.validate()?;
        Ok(s)
    }

    pub fn from_slice(dims: &[usize]) -> Result<Self> {
        match dims {
            [n, d, h, w, c] => Shape5::new(*n, *d, *h, *w, *c),
            _ => Err(Error::shape(format!(
                "expected 5 dims (N,D,H,W,C), got {}",
                dims.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.h == 0 || self.w == 0 || self.c == 0 {
            return Err(Error::shape(format!("all dims must be >= 1, got {self}")));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [usize; 5] {
        [self.n, self.d, self.h, self.w, self.c]
    }

    /// Total element count.
    pub fn len(&self) -> usize {
        self.n * self.d * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxels(&self) -> usize {
        self.d * self.h * self.w
    }

    /// Elements in one batch sample.
    pub fn sample_len(&self) -> usize {
        self.voxels() * self.c
    }

    pub fn with_channels(&self, c: usize) -> Shape5 {
        Shape5 { c, ..*self }
    }

    pub fn with_batch(&self, n: usize) -> Shape5 {
        Shape5 { n, ..*self }
    }

    pub fn with_spatial(&self, d: usize, h: usize, w: usize) -> Shape5 {
        Shape5 { d, h, w, ..*self }
    }

    pub fn linear_index(&self, at: Coord5) -> Result<usize> {
        linear_index(at, *self)
    }

    /// Inverse of [`linear_index`]; `idx` must be `< len()`.
    pub fn coord_of(&self, mut idx: usize) -> Coord5 {
        let c = idx % self.c;
        idx /= self.c;
        let z = idx % self.w;
        idx /= self.w;
        let y = idx % self.h;
        idx /= self.h;
        let x = idx % self.d;
        let n = idx / self.d;
        Coord5 { n, x, y, z, c }
    }
}

impl std::fmt::Display for Shape5 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{},{})", self.n, self.d, self.h, self.w, self.c)
    }
}

/// Flat offset of `at` inside a tensor of extents `dims`.
pub fn linear_index(at: Coord5, dims: Shape5) -> Result<usize> {
    let pairs = [
        ("n", at.n, dims.n),
        ("x", at.x, dims.d),
        ("y", at.y, dims.h),
        ("z", at.z, dims.w),
        ("c", at.c, dims.c),
    ];
    for (name, v, extent) in pairs {
        if v >= extent {
            return Err(Error::Bounds(format!(
                "coordinate {name}={v} out of range for extent {extent}"
            )));
        }
    }
    Ok(at.c + dims.c * (at.z + dims.w * (at.y + dims.h * (at.x + dims.d * at.n))))
}

/// Dense volume tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeTensor<T> {
    shape: Shape5,
    data: Vec<T>,
}

impl<T: Scalar> VolumeTensor<T> {
    pub fn zeros(shape: Shape5) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape5, value: T) -> Self {
        VolumeTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer length {} does not match dims {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        Ok(VolumeTensor { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut(Coord5) -> T) -> Self {
        let data = (0..shape.len()).map(|i| f(shape.coord_of(i))).collect();
        VolumeTensor { shape, data }
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, at: Coord5) -> Result<T> {
        Ok(self.data[linear_index(at, self.shape)?])
    }

    pub fn set(&mut self, at: Coord5, v: T) -> Result<()> {
        let i = linear_index(at, self.shape)?;
        self.data[i] = v;
        Ok(())
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.shape.sample_len();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let s = self.shape.sample_len();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn cast<U: Scalar>(&self) -> VolumeTensor<U> {
        VolumeTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    fn check_same(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: shape mismatch {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(VolumeTensor { shape: self.shape, data })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        VolumeTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn relu(&self) -> Self {
        VolumeTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| v.max(T::zero())).collect(),
        }
    }

    /// 1 where the input was strictly positive, else 0.
    pub fn relu_grad_mask(&self) -> Self {
        VolumeTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| if v > T::zero() { T::one() } else { T::zero() })
                .collect(),
        }
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "mul")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(VolumeTensor { shape: self.shape, data })
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.data.len()).unwrap()
    }

    /// Per-channel mean and (population) variance over batch and space.
    pub fn channel_mean_var(&self) -> (Vec<T>, Vec<T>) {
        let c = self.shape.c;
        let rows = self.data.len() / c;
        let count = T::from_usize(rows).unwrap();
        let mut mean = vec![T::zero(); c];
        for row in self.data.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        let mut var = vec![T::zero(); c];
        for row in self.data.chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = *s / count);
        (mean, var)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks same-shaped samples along the batch axis.
    pub fn stack(samples: &[&VolumeTensor<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::shape("stack: no samples"))?;
        let per = first.shape;
        let mut data = Vec::with_capacity(per.len() * samples.len());
        let mut n = 0;
        for s in samples {
            if s.shape.with_batch(1) != per.with_batch(1) {
                return Err(Error::shape(format!(
                    "stack: sample dims {} differ from {}",
                    s.shape, per
                )));
            }
            n += s.shape.n;
            data.extend_from_slice(&s.data);
        }
        VolumeTensor::from_vec(per.with_batch(n), data)
    }

    /// Extracts batch item `n` as a standalone tensor with `N = 1`.
    pub fn batch_item(&self, n: usize) -> Self {
        VolumeTensor {
            shape: self.shape.with_batch(1),
            data: self.sample(n).to_vec(),
        }
    }

    /// Concatenates along the channel axis (`self` channels first).
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.shape.with_channels(1) != other.shape.with_channels(1) {
            return Err(Error::shape(format!(
                "concat: dims {} and {} differ outside channels",
                self.shape, other.shape
            )));
        }
        let (ca, cb) = (self.shape.c, other.shape.c);
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for (ra, rb) in self.data.chunks_exact(ca).zip(other.data.chunks_exact(cb)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        Ok(VolumeTensor {
            shape: self.shape.with_channels(ca + cb),
            data,
        })
    }

    /// Splits channels `[0, at)` and `[at, C)`.
    pub fn split_channels(&self, at: usize) -> Result<(Self, Self)> {
        let c = self.shape.c;
        if at == 0 || at >= c {
            return Err(Error::shape(format!("split at {at} invalid for {c} channels")));
        }
        let rows = self.data.len() / c;
        let mut a = Vec::with_capacity(rows * at);
        let mut b = Vec::with_capacity(rows * (c - at));
        for row in self.data.chunks_exact(c) {
            a.extend_from_slice(&row[..at]);
            b.extend_from_slice(&row[at..]);
        }
        Ok((
            VolumeTensor { shape: self.shape.with_channels(at), data: a },
            VolumeTensor { shape: self.shape.with_channels(c - at), data: b },
        ))
    }
}
