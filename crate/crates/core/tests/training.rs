use approx::assert_abs_diff_eq;
use gsconv_core::gradcheck::{central_difference, relative_error};
use gsconv_core::network::*;
use gsconv_core::synth::{generate, TaskKind, TaskSpec};
use gsconv_core::training::*;
use gsconv_core::{Error, Shape5, SpatialGroups, VolumeTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape(d: usize, h: usize, w: usize, c: usize) -> Shape5 {
    Shape5::new(1, d, h, w, c).unwrap()
}

#[test]
fn softmax_contracts() {
    let eq = softmax_channels(&VolumeTensor::full(shape(2, 2, 2, 4), 3.0f64));
    assert!(eq.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    let big = softmax_channels(&VolumeTensor::from_vec(shape(1, 1, 1, 2), vec![1000.0f64, 0.0]).unwrap());
    assert_eq!(big.data()[0], 1.0);
    assert!(big.data()[1] >= 0.0 && big.data()[1] < 1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = VolumeTensor::from_fn(shape(3, 3, 3, 5), |_| rng.gen_range(-20.0f64..20.0));
    for row in softmax_channels(&x).data().chunks(5) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn onehot_cube(s: Shape5, classes: usize, f: impl Fn(usize, usize, usize) -> usize) -> VolumeTensor<f64> {
    let labels = VolumeTensor::from_fn(s.with_channels(1), |p| f(p.x, p.y, p.z) as f64);
    one_hot(&labels, classes).unwrap()
}

#[test]
fn dice_loss_extremes() {
    let s = shape(2, 2, 2, 3);
    let t = onehot_cube(s, 3, |x, y, _| (x + y) % 3);
    let (loss, grad) = dice_loss(&t, &t).unwrap();
    assert!(loss.abs() < 1e-5, "{loss}");
    assert!(grad.max_abs() < 1e-5);

    let other = onehot_cube(s, 3, |x, y, _| (x + y + 1) % 3);
    let (loss, _) = dice_loss(&other, &t).unwrap();
    assert!((loss - 1.0).abs() < 1e-5);

    let background = onehot_cube(s, 3, |_, _, _| 0);
    let (loss, grad) = dice_loss(&background, &background).unwrap();
    assert!(loss.is_finite() && grad.all_finite());
}

#[test]
fn dice_loss_gradient_check() {
    let s = shape(2, 2, 2, 3);
    let t = onehot_cube(s, 3, |x, y, z| (x + 2 * y + z) % 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = VolumeTensor::from_fn(s, |_| rng.gen_range(0.05f64..0.95));
    let (_, grad) = dice_loss(&p, &t).unwrap();
    let idx: Vec<usize> = (0..s.len()).collect();
    let numeric = central_difference(p.data(), &idx, 1e-6, |v| {
        dice_loss(&VolumeTensor::from_vec(s, v.to_vec()).unwrap(), &t).unwrap().0
    });
    let err = relative_error(grad.data(), &numeric);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn softmax_dice_chain_gradient_check() {
    let s = shape(2, 2, 2, 3);
    let t = onehot_cube(s, 3, |x, _, z| (x + z) % 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits = VolumeTensor::from_fn(s, |_| rng.gen_range(-2.0f64..2.0));
    let p = softmax_channels(&logits);
    let (_, gp) = dice_loss(&p, &t).unwrap();
    let gl = softmax_backward(&p, &gp).unwrap();
    let idx: Vec<usize> = (0..s.len()).collect();
    let numeric = central_difference(logits.data(), &idx, 1e-6, |v| {
        let p = softmax_channels(&VolumeTensor::from_vec(s, v.to_vec()).unwrap());
        dice_loss(&p, &t).unwrap().0
    });
    assert!(relative_error(gl.data(), &numeric) < 1e-5);
}

#[test]
fn poly_schedule() {
    assert_eq!(poly_lr(0, 1000, 0.01, 0.9).unwrap(), 0.01);
    assert_eq!(poly_lr(1000, 1000, 0.01, 0.9).unwrap(), 0.0);
    assert_abs_diff_eq!(poly_lr(500, 1000, 0.01, 0.9).unwrap(), 0.0053589, epsilon = 5e-8);
    assert!(matches!(poly_lr(1001, 1000, 0.01, 0.9), Err(Error::Argument(_))));
    let lrs: Vec<f64> = (0..=100).map(|i| poly_lr(i, 100, 0.01, 0.9).unwrap()).collect();
    assert!(lrs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn sgd_updates() {
    let names = vec!["w".to_string()];
    let mut p = vec![1.0f64, 2.0];
    let mut st = SgdState::zeros_like([2]);
    sgd_step(&mut [&mut p[..]], &names, &[vec![0.5, -1.0]], 1.0, 0.0, &mut st).unwrap();
    assert_eq!(p, vec![0.5, 3.0]);

    let mut st = SgdState { velocity: vec![vec![1.0, -2.0]] };
    let before = p.clone();
    sgd_step(&mut [&mut p[..]], &names, &[vec![0.0, 0.0]], 0.0, 0.9, &mut st).unwrap();
    assert_eq!(p, before);
    assert_eq!(st.velocity[0], vec![0.9, -1.8]);

    // v1 = 0.5, p1 = 1 - 0.1·0.5; v2 = 0.9·0.5 + 0.25, p2 = p1 - 0.1·v2
    let mut q = vec![1.0f64];
    let mut st = SgdState::zeros_like([1]);
    sgd_step(&mut [&mut q[..]], &names, &[vec![0.5]], 0.1, 0.9, &mut st).unwrap();
    sgd_step(&mut [&mut q[..]], &names, &[vec![0.25]], 0.1, 0.9, &mut st).unwrap();
    assert_abs_diff_eq!(st.velocity[0][0], 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(q[0], 0.88, epsilon = 1e-15);
}

#[test]
fn sgd_rejects_non_finite_gradient_by_name() {
    let names = vec!["a".to_string(), "enc1.conv1.bias".to_string()];
    let (mut a, mut b) = (vec![1.0f64], vec![1.0f64]);
    let mut st = SgdState::zeros_like([1, 1]);
    let err = sgd_step(&mut [&mut a[..], &mut b[..]], &names, &[vec![1.0], vec![f64::NAN]], 0.1, 0.9, &mut st).unwrap_err();
    assert!(err.to_string().contains("enc1.conv1.bias"));
    assert_eq!(a, vec![1.0], "nothing is updated on failure");
}

#[test]
fn hard_dice_cases() {
    let truth: Vec<usize> = (0..16).map(|i| if i < 8 { 1 } else { 0 }).collect();
    assert_eq!(hard_dice(&truth, &truth, 3), vec![1.0, 1.0]);
    assert_eq!(hard_dice(&vec![0; 16], &truth, 3)[0], 0.0);
    // equal-size cubes sharing half their volume
    let pred: Vec<usize> = (0..16).map(|i| if (4..12).contains(&i) { 1 } else { 0 }).collect();
    assert_eq!(hard_dice(&pred, &truth, 2), vec![0.5]);
}

#[test]
fn hard_dice_matches_soft_formula_on_one_hot() {
    let s = shape(4, 4, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<usize> = (0..s.voxels()).map(|_| rng.gen_range(0..3)).collect();
    let b: Vec<usize> = (0..s.voxels()).map(|_| rng.gen_range(0..3)).collect();
    let oh = |v: &Vec<usize>| onehot_cube(s, 3, |x, y, z| v[(x * 4 + y) * 2 + z]);
    let (loss, _) = dice_loss(&oh(&a), &oh(&b)).unwrap();
    let hard = hard_dice(&a, &b, 3);
    assert_abs_diff_eq!(1.0 - (hard[0] + hard[1]) / 2.0, loss, epsilon = 1e-6);
}

#[test]
fn normalisation() {
    let s = shape(2, 2, 2, 1);
    let v = VolumeTensor::from_vec(s, (1..=8).map(f64::from).collect()).unwrap();
    let mask: Vec<bool> = (0..8).map(|i| i < 4).collect();
    let (out, fallback) = normalize_volume(&v, &mask).unwrap();
    assert!(!fallback);
    // foreground {1,2,3,4}: mean 2.5, population std sqrt(1.25)
    let sd = 1.25f64.sqrt();
    for (i, &o) in out.data().iter().enumerate() {
        assert_abs_diff_eq!(o, (i as f64 + 1.0 - 2.5) / sd, epsilon = 1e-12);
    }

    let c = VolumeTensor::from_vec(s, vec![5.0, 5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
    let (_, fallback) = normalize_volume(&c, &mask).unwrap();
    assert!(fallback);
    let (_, fallback) = normalize_volume(&c, &[false; 8]).unwrap();
    assert!(fallback);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = rand_distr::Normal::new(3.0, 2.0).unwrap();
    let big: VolumeTensor<f64> = VolumeTensor::from_fn(shape(16, 16, 16, 1), |_| rng.sample(normal));
    let (out, _) = normalize_volume(&big, &vec![true; 4096]).unwrap();
    let (m, var) = out.channel_mean_var();
    assert!(m[0].abs() < 1e-12 && (var[0] - 1.0).abs() < 1e-9);
}

fn tiny_setup(kind: TaskKind) -> (Network<f64>, Vec<Sample<f64>>) {
    let data = generate::<f64>(&TaskSpec::new(kind, 4, 6)).unwrap();
    let g = SpatialGroups::new(2, 2, 1);
    let spec = NetworkSpec::with_channels(1, 3, [8, 8, 8], [g; 3], ConvKind::Pointwise, GsInsertPosition::Csc, GsPlacement::Both);
    (build_network(&spec, data[0].image.shape(), 1).unwrap(), data)
}

#[test]
fn training_is_deterministic_and_loss_in_range() {
    let cfg = TrainConfig { max_iters: 4, batch_size: 2, log_interval: 1, seed: 3, ..Default::default() };
    let (mut a, data) = tiny_setup(TaskKind::LongRange);
    let mut b = a.clone();
    let ra = train(&mut a, &data, &cfg, |_| {}).unwrap();
    let rb = train(&mut b, &data, &cfg, |_| {}).unwrap();
    assert_eq!(metrics_csv(&ra, 3), metrics_csv(&rb, 3));
    assert_eq!(a.parameters(), b.parameters());
    assert_eq!(ra.len(), 4);
    assert!(ra[0].loss > 0.0 && ra[0].loss <= 1.0);
    assert!(ra.iter().all(|r| r.dice.iter().all(|d| (0.0..=1.0).contains(d))));
    assert!(metrics_csv(&ra, 3).starts_with("iter,loss,dice_class1,dice_class2,mDice,lr\n"));
}

#[test]
fn evaluation_perfect_and_checkpoint_round_trip() {
    let (net, data) = tiny_setup(TaskKind::LocalPattern);
    let r = evaluate(&net, &data).unwrap();
    assert!((0.0..=1.0).contains(&r.mdice));
    assert_eq!(evaluate(&net, &data).unwrap(), r);

    let dir = std::env::temp_dir().join(format!("gsconv-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.gsv");
    save_checkpoint(&path, &net).unwrap();
    let back: Network<f64> = load_checkpoint(&path, Some(net.spec())).unwrap();
    assert_eq!(back.parameters(), net.parameters());
    assert_eq!(back.predict(&data[0].image).unwrap(), net.predict(&data[0].image).unwrap());
    let other = net.spec().without_shift();
    assert!(matches!(load_checkpoint::<f64>(&path, Some(&other)), Err(Error::Config(_))));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn label_validation() {
    let bad = VolumeTensor::from_vec(shape(1, 1, 1, 1), vec![3.0f64]).unwrap();
    assert!(one_hot(&bad, 3).is_err());
    let frac = VolumeTensor::from_vec(shape(1, 1, 1, 1), vec![0.5f64]).unwrap();
    assert!(one_hot(&frac, 3).is_err());
}
