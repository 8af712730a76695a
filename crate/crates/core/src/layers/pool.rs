//! 2×2×2 average pooling and nearest-neighbour 2× upsampling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

/// Calls `f(fine_row, coarse_row)` for each fine voxel, rows being flat
/// voxel indices over (n, x, y, z).
fn for_each_block(fine: Shape5, mut f: impl FnMut(usize, usize)) {
    let (cd, ch, cw) = (fine.d / 2, fine.h / 2, fine.w / 2);
    for n in 0..fine.n {
        for x in 0..fine.d {
            for y in 0..fine.h {
                for z in 0..fine.w {
                    let fr = ((n * fine.d + x) * fine.h + y) * fine.w + z;
                    let cr = ((n * cd + x / 2) * ch + y / 2) * cw + z / 2;
                    f(fr, cr);
                }
            }
        }
    }
}

fn check_even(s: Shape5) -> Result<()> {
    if s.d % 2 != 0 || s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(format!("avgpool2 needs even spatial dims, got {s}")));
    }
    Ok(())
}

pub fn avgpool2_forward<T: Scalar>(input: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
    let s = input.shape();
    check_even(s)?;
    let out_shape = s.with_spatial(s.d / 2, s.h / 2, s.w / 2);
    let c = s.c;
    let eighth = T::from_f64_lossy(0.125);
    let x = input.data();
    let mut out = vec![T::zero(); out_shape.len()];
    for_each_block(s, |fr, cr| {
        for (o, &v) in out[cr * c..(cr + 1) * c].iter_mut().zip(&x[fr * c..(fr + 1) * c]) {
            *o += v * eighth;
        }
    });
    VolumeTensor::from_vec(out_shape, out)
}

/// `input_shape` is the shape fed to the forward pass.
pub fn avgpool2_backward<T: Scalar>(grad_out: &VolumeTensor<T>, input_shape: Shape5) -> Result<VolumeTensor<T>> {
    check_even(input_shape)?;
    let s = input_shape;
    if grad_out.shape() != s.with_spatial(s.d / 2, s.h / 2, s.w / 2) {
        return Err(Error::shape(format!(
            "avgpool2 backward: grad {} does not match input {s}",
            grad_out.shape()
        )));
    }
    let c = s.c;
    let eighth = T::from_f64_lossy(0.125);
    let g = grad_out.data();
    let mut out = vec![T::zero(); s.len()];
    for_each_block(s, |fr, cr| {
        for (o, &v) in out[fr * c..(fr + 1) * c].iter_mut().zip(&g[cr * c..(cr + 1) * c]) {
            *o = v * eighth;
        }
    });
    VolumeTensor::from_vec(s, out)
}

pub fn upsample2_forward<T: Scalar>(input: &VolumeTensor<T>) -> VolumeTensor<T> {
    let s = input.shape();
    let fine = s.with_spatial(s.d * 2, s.h * 2, s.w * 2);
    let c = s.c;
    let x = input.data();
    let mut out = vec![T::zero(); fine.len()];
    for_each_block(fine, |fr, cr| {
        out[fr * c..(fr + 1) * c].copy_from_slice(&x[cr * c..(cr + 1) * c]);
    });
    VolumeTensor::from_vec(fine, out).expect("upsampled shape is consistent")
}

pub fn upsample2_backward<T: Scalar>(grad_out: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
    let fine = grad_out.shape();
    check_even(fine)?;
    let coarse = fine.with_spatial(fine.d / 2, fine.h / 2, fine.w / 2);
    let c = fine.c;
    let g = grad_out.data();
    let mut out = vec![T::zero(); coarse.len()];
    for_each_block(fine, |fr, cr| {
        for (o, &v) in out[cr * c..(cr + 1) * c].iter_mut().zip(&g[fr * c..(fr + 1) * c]) {
            *o += v;
        }
    });
    VolumeTensor::from_vec(coarse, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_examples() {
        let s = Shape5::new(1, 2, 2, 2, 1).unwrap();
        let block = VolumeTensor::from_vec(s, (1..=8).map(f64::from).collect()).unwrap();
        assert_eq!(avgpool2_forward(&block).unwrap().data(), &[4.5]);
        let c = VolumeTensor::full(Shape5::new(2, 4, 2, 6, 3).unwrap(), -1.25);
        let p = avgpool2_forward(&c).unwrap();
        assert_eq!(p.shape(), Shape5::new(2, 2, 1, 3, 3).unwrap());
        assert!(p.data().iter().all(|&v| v == -1.25));
        assert!(avgpool2_forward(&VolumeTensor::<f64>::zeros(Shape5::new(1, 3, 2, 2, 1).unwrap())).is_err());
    }

    #[test]
    fn upsample_examples() {
        let one = VolumeTensor::full(Shape5::new(1, 1, 1, 1, 1).unwrap(), 7.0);
        let up = upsample2_forward(&one);
        assert_eq!(up.data(), &[7.0; 8]);
        let s = Shape5::new(2, 2, 3, 1, 2).unwrap();
        let x = VolumeTensor::from_fn(s, |p| (p.x * 100 + p.y * 10 + p.c + p.n * 1000) as f64);
        assert_eq!(avgpool2_forward(&upsample2_forward(&x)).unwrap(), x);
        assert_eq!(upsample2_backward(&upsample2_forward(&x)).unwrap(), x.scale(8.0));
    }
}
