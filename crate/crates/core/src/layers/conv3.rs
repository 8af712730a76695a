//! 3×3×3 convolution, stride 1, zero padding 1. The dense baseline.

use rand::Rng;

use super::uniform_init;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

pub const TAPS: usize = 27;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3Params<T> {
    pub c_in: usize,
    pub c_out: usize,
    /// `c_out × c_in × 3 × 3 × 3`, kernel offsets ordered (depth, height, width).
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Conv3Grads<T> {
    pub input: VolumeTensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3Params<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Conv3Params {
            c_in,
            c_out,
            weight: vec![T::zero(); c_out * c_in * TAPS],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Conv3Params {
            c_in,
            c_out,
            weight: uniform_init(rng, c_in * TAPS, c_in * c_out * TAPS),
            bias: vec![T::zero(); c_out],
        }
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, tap: usize) -> usize {
        (o * self.c_in + i) * TAPS + tap
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `[tap][i][o]` layout so the inner loop runs over output channels.
    fn by_tap(&self) -> Vec<T> {
        let (ci, co) = (self.c_in, self.c_out);
        let mut out = vec![T::zero(); self.weight.len()];
        for o in 0..co {
            for i in 0..ci {
                for t in 0..TAPS {
                    out[(t * ci + i) * co + o] = self.weight[self.index(o, i, t)];
                }
            }
        }
        out
    }
}

/// Offset of a kernel tap along each axis, in `-1..=1`.
#[inline]
fn tap_offsets(t: usize) -> (isize, isize, isize) {
    ((t / 9) as isize - 1, ((t / 3) % 3) as isize - 1, (t % 3) as isize - 1)
}

/// Calls `f(tap, out_voxel, in_voxel)` for every in-bounds pair, voxel
/// indices being flat over (n, x, y, z).
fn for_each_tap(s: Shape5, mut f: impl FnMut(usize, usize, usize)) {
    for n in 0..s.n {
        for x in 0..s.d {
            for y in 0..s.h {
                for z in 0..s.w {
                    let out_vox = ((n * s.d + x) * s.h + y) * s.w + z;
                    for t in 0..TAPS {
                        let (dx, dy, dz) = tap_offsets(t);
                        let (xx, yy, zz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                        if xx < 0 || yy < 0 || zz < 0 || xx >= s.d as isize || yy >= s.h as isize || zz >= s.w as isize {
                            continue;
                        }
                        let in_vox = ((n * s.d + xx as usize) * s.h + yy as usize) * s.w + zz as usize;
                        f(t, out_vox, in_vox);
                    }
                }
            }
        }
    }
}

pub fn conv3_forward<T: Scalar>(input: &VolumeTensor<T>, p: &Conv3Params<T>) -> Result<VolumeTensor<T>> {
    let s = input.shape();
    if s.c != p.c_in {
        return Err(Error::shape(format!("conv3: input has {} channels, layer expects {}", s.c, p.c_in)));
    }
    let (ci, co) = (p.c_in, p.c_out);
    let wt = p.by_tap();
    let x = input.data();
    let mut out = Vec::with_capacity(s.n * s.voxels() * co);
    for _ in 0..s.n * s.voxels() {
        out.extend_from_slice(&p.bias);
    }
    for_each_tap(s, |t, ov, iv| {
        let acc = &mut out[ov * co..(ov + 1) * co];
        let xrow = &x[iv * ci..(iv + 1) * ci];
        let wtap = &wt[t * ci * co..(t + 1) * ci * co];
        for (&xi, wrow) in xrow.iter().zip(wtap.chunks_exact(co)) {
            for (a, &w) in acc.iter_mut().zip(wrow) {
                *a += w * xi;
            }
        }
    });
    VolumeTensor::from_vec(s.with_channels(co), out)
}

pub fn conv3_backward<T: Scalar>(
    input: &VolumeTensor<T>,
    p: &Conv3Params<T>,
    grad_out: &VolumeTensor<T>,
) -> Result<Conv3Grads<T>> {
    let s = input.shape();
    if s.c != p.c_in || grad_out.shape() != s.with_channels(p.c_out) {
        return Err(Error::shape(format!(
            "conv3 backward: input {s}, grad {} for {}→{}",
            grad_out.shape(),
            p.c_in,
            p.c_out
        )));
    }
    let (ci, co) = (p.c_in, p.c_out);
    let wt = p.by_tap();
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gwt = vec![T::zero(); wt.len()];
    let mut gb = vec![T::zero(); co];
    for grow in g.chunks_exact(co) {
        for (b, &v) in gb.iter_mut().zip(grow) {
            *b += v;
        }
    }
    for_each_tap(s, |t, ov, iv| {
        let grow = &g[ov * co..(ov + 1) * co];
        let xrow = &x[iv * ci..(iv + 1) * ci];
        let base = t * ci * co;
        for i in 0..ci {
            let wrow = &wt[base + i * co..base + (i + 1) * co];
            let gwrow = &mut gwt[base + i * co..base + (i + 1) * co];
            let xi = xrow[i];
            let mut acc = T::zero();
            for ((gw, &w), &gv) in gwrow.iter_mut().zip(wrow).zip(grow) {
                acc += w * gv;
                *gw += xi * gv;
            }
            gx[iv * ci + i] += acc;
        }
    });
    let mut gw = vec![T::zero(); wt.len()];
    for o in 0..co {
        for i in 0..ci {
            for t in 0..TAPS {
                gw[p.index(o, i, t)] = gwt[(t * ci + i) * co + o];
            }
        }
    }
    Ok(Conv3Grads { input: VolumeTensor::from_vec(s, gx)?, weight: gw, bias: gb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::pointwise::{pointwise_forward, PointwiseConvParams};
    use crate::tensor::Coord5;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CENTER: usize = 13;

    fn random(shape: Shape5, seed: u64) -> VolumeTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeTensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn center_tap_equals_pointwise() {
        let x = random(Shape5::new(1, 3, 2, 4, 2).unwrap(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pw = PointwiseConvParams::<f64>::init(2, 3, &mut rng);
        let mut c3 = Conv3Params::zeros(2, 3);
        for o in 0..3 {
            for i in 0..2 {
                let k = c3.index(o, i, CENTER);
                c3.weight[k] = pw.weight[o * 2 + i];
            }
        }
        let a = conv3_forward(&x, &c3).unwrap();
        let b = pointwise_forward(&x, &pw).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn all_ones_kernel_interior_sums_27() {
        let x = VolumeTensor::full(Shape5::new(1, 3, 3, 3, 1).unwrap(), 1.0);
        let mut p = Conv3Params::<f64>::zeros(1, 1);
        p.weight.iter_mut().for_each(|w| *w = 1.0);
        let y = conv3_forward(&x, &p).unwrap();
        assert_eq!(y.get(Coord5::new(0, 1, 1, 1, 0)).unwrap(), 27.0);
        assert_eq!(y.get(Coord5::new(0, 0, 0, 0, 0)).unwrap(), 8.0);
    }

    #[test]
    fn matches_direct_convolution() {
        let s = Shape5::new(2, 3, 4, 2, 2).unwrap();
        let x = random(s, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = Conv3Params::<f64>::init(2, 3, &mut rng);
        p.bias = vec![0.1, -0.2, 0.3];
        let y = conv3_forward(&x, &p).unwrap();
        for n in 0..s.n {
            for a in 0..s.d as isize {
                for b in 0..s.h as isize {
                    for c in 0..s.w as isize {
                        for o in 0..3 {
                            let mut acc = p.bias[o];
                            for i in 0..2 {
                                for ka in 0..3isize {
                                    for kb in 0..3isize {
                                        for kc in 0..3isize {
                                            let (u, v, w) = (a + ka - 1, b + kb - 1, c + kc - 1);
                                            if u < 0 || v < 0 || w < 0 || u >= s.d as isize || v >= s.h as isize || w >= s.w as isize {
                                                continue;
                                            }
                                            let tap = (ka * 9 + kb * 3 + kc) as usize;
                                            let xv = x.get(Coord5::new(n, u as usize, v as usize, w as usize, i)).unwrap();
                                            acc += p.weight[p.index(o, i, tap)] * xv;
                                        }
                                    }
                                }
                            }
                            let got = y.get(Coord5::new(n, a as usize, b as usize, c as usize, o)).unwrap();
                            assert!((got - acc).abs() < 1e-13);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = random(Shape5::new(1, 2, 2, 2, 3).unwrap(), 1);
        assert!(conv3_forward(&x, &Conv3Params::zeros(2, 2)).is_err());
        assert_eq!(Conv3Params::<f64>::zeros(16, 32).param_count(), 13856);
    }
}
