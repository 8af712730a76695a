use gsconv_core::gradcheck::{central_difference, relative_error, spread_indices};
use gsconv_core::layers::*;
use gsconv_core::{build_permutation, group_shift_backward, apply_permutation, GroupShiftConfig, Shape5, VolumeTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(s: Shape5, seed: u64) -> VolumeTensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VolumeTensor::from_fn(s, |_| rng.gen_range(-1.0..1.0))
}

fn with_data(s: Shape5, v: &[f64]) -> VolumeTensor<f64> {
    VolumeTensor::from_vec(s, v.to_vec()).unwrap()
}

const TOL: f64 = 1e-5;

#[test]
fn pointwise_gradients() {
    let s = Shape5::new(2, 3, 2, 2, 4).unwrap();
    let x = random(s, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = PointwiseConvParams::<f64>::init(4, 3, &mut rng);
    let probe = random(s.with_channels(3), 3);
    let g = pointwise_backward(&x, &p, &probe).unwrap();

    let all: Vec<usize> = (0..s.len()).collect();
    let n = central_difference(x.data(), &all, 1e-6, |v| pointwise_forward(&with_data(s, v), &p).unwrap().dot(&probe).unwrap());
    assert!(relative_error(g.input.data(), &n) < TOL);

    let widx: Vec<usize> = (0..p.weight.len()).collect();
    let n = central_difference(&p.weight, &widx, 1e-6, |w| {
        let q = PointwiseConvParams::new(4, 3, w.to_vec(), p.bias.clone()).unwrap();
        pointwise_forward(&x, &q).unwrap().dot(&probe).unwrap()
    });
    assert!(relative_error(&g.weight, &n) < TOL);

    let bidx: Vec<usize> = (0..3).collect();
    let n = central_difference(&p.bias, &bidx, 1e-6, |b| {
        let q = PointwiseConvParams::new(4, 3, p.weight.clone(), b.to_vec()).unwrap();
        pointwise_forward(&x, &q).unwrap().dot(&probe).unwrap()
    });
    assert!(relative_error(&g.bias, &n) < TOL);
}

#[test]
fn conv3_gradients() {
    let s = Shape5::new(1, 4, 3, 3, 2).unwrap();
    let x = random(s, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = Conv3Params::<f64>::init(2, 3, &mut rng);
    let probe = random(s.with_channels(3), 6);
    let g = conv3_backward(&x, &p, &probe).unwrap();

    let all: Vec<usize> = (0..s.len()).collect();
    let n = central_difference(x.data(), &all, 1e-6, |v| conv3_forward(&with_data(s, v), &p).unwrap().dot(&probe).unwrap());
    assert!(relative_error(g.input.data(), &n) < TOL);

    let widx = spread_indices(p.weight.len(), 40);
    let n = central_difference(&p.weight, &widx, 1e-6, |w| {
        let mut q = p.clone();
        q.weight = w.to_vec();
        conv3_forward(&x, &q).unwrap().dot(&probe).unwrap()
    });
    let a: Vec<f64> = widx.iter().map(|&i| g.weight[i]).collect();
    assert!(relative_error(&a, &n) < TOL);

    let n = central_difference(&p.bias, &[0, 1, 2], 1e-6, |b| {
        let mut q = p.clone();
        q.bias = b.to_vec();
        conv3_forward(&x, &q).unwrap().dot(&probe).unwrap()
    });
    assert!(relative_error(&g.bias, &n) < TOL);
}

#[test]
fn norm_gradients() {
    let s = Shape5::new(2, 3, 2, 2, 3).unwrap();
    let x = random(s, 7);
    let mut p = NormParams::<f64>::new(3);
    p.scale = vec![1.5, -0.7, 0.3];
    p.shift = vec![0.1, 0.2, -0.4];
    let probe = random(s, 8);
    let (_, cache) = norm_forward(&x, &p).unwrap();
    let g = norm_backward(&cache, &p, &probe).unwrap();
    let f = |x: &VolumeTensor<f64>, p: &NormParams<f64>| norm_forward(x, p).unwrap().0.dot(&probe).unwrap();

    let all: Vec<usize> = (0..s.len()).collect();
    let n = central_difference(x.data(), &all, 1e-6, |v| f(&with_data(s, v), &p));
    assert!(relative_error(g.input.data(), &n) < TOL);
    let n = central_difference(&p.scale, &[0, 1, 2], 1e-6, |v| f(&x, &NormParams { scale: v.to_vec(), ..p.clone() }));
    assert!(relative_error(&g.scale, &n) < TOL);
    let n = central_difference(&p.shift, &[0, 1, 2], 1e-6, |v| f(&x, &NormParams { shift: v.to_vec(), ..p.clone() }));
    assert!(relative_error(&g.shift, &n) < TOL);
}

#[test]
fn relu_pool_upsample_gradients() {
    let s = Shape5::new(1, 4, 4, 2, 2).unwrap();
    let x = random(s, 9);
    let all: Vec<usize> = (0..s.len()).collect();

    let probe = random(s, 10);
    let y = x.relu();
    let mut g = probe.data().to_vec();
    relu_backward_inplace(&mut g, y.data());
    let n = central_difference(x.data(), &all, 1e-7, |v| with_data(s, v).relu().dot(&probe).unwrap());
    assert!(relative_error(&g, &n) < TOL);

    let coarse = Shape5::new(1, 2, 2, 1, 2).unwrap();
    let probe = random(coarse, 11);
    let g = avgpool2_backward(&probe, s).unwrap();
    let n = central_difference(x.data(), &all, 1e-6, |v| avgpool2_forward(&with_data(s, v)).unwrap().dot(&probe).unwrap());
    assert!(relative_error(g.data(), &n) < TOL);

    let xc = random(coarse, 12);
    let probe = random(s, 13);
    let g = upsample2_backward(&probe).unwrap();
    let cidx: Vec<usize> = (0..coarse.len()).collect();
    let n = central_difference(xc.data(), &cidx, 1e-6, |v| upsample2_forward(&with_data(coarse, v)).dot(&probe).unwrap());
    assert!(relative_error(g.data(), &n) < TOL);
}

#[test]
fn group_shift_gradient() {
    let s = Shape5::new(2, 4, 4, 2, 8).unwrap();
    let cfg = GroupShiftConfig::new((2, 2, 1), 1).unwrap();
    let t = build_permutation(&cfg, s).unwrap();
    let x = random(s, 14);
    let probe = random(s, 15);
    let g = group_shift_backward(&probe, &t).unwrap();
    let all: Vec<usize> = (0..s.len()).collect();
    let n = central_difference(x.data(), &all, 1e-6, |v| apply_permutation(&with_data(s, v), &t).unwrap().dot(&probe).unwrap());
    assert!(relative_error(g.data(), &n) < TOL);
}
