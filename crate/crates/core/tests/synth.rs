use gsconv_core::synth::*;
use gsconv_core::training::{hard_dice, label_ids, EvalReport, Sample};

#[test]
fn regeneration_is_bit_identical() {
    for kind in [TaskKind::LongRange, TaskKind::LocalPattern] {
        let spec = TaskSpec::new(kind, 11, 4);
        assert_eq!(generate::<f64>(&spec).unwrap(), generate::<f64>(&spec).unwrap());
        let other = TaskSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate::<f64>(&spec).unwrap(), generate::<f64>(&other).unwrap());
    }
}

#[test]
fn flipped_marker_keeps_support_and_changes_class() {
    let spec = TaskSpec::new(TaskKind::LongRange, 3, 1);
    let layout = long_range_layout(&spec, 0).unwrap();
    let a: Sample<f64> = render_long_range(&spec, &layout, 0).unwrap();
    let b: Sample<f64> = render_long_range(&spec, &layout.flipped(), 0).unwrap();
    let mut classes = std::collections::BTreeSet::new();
    for (&x, &y) in a.label.data().iter().zip(b.label.data()) {
        assert_eq!(x > 0.0, y > 0.0);
        if x > 0.0 {
            assert_ne!(x, y);
            classes.insert((x as usize, y as usize));
        }
    }
    assert_eq!(classes.len(), 1);
}

#[test]
fn class_balance_labels_and_distance_audit() {
    let spec = TaskSpec::new(TaskKind::LongRange, 5, 120);
    let data = gen_long_range::<f64>(&spec).unwrap();
    let mut ones = 0;
    for (i, s) in data.iter().enumerate() {
        let ids = label_ids(&s.label, 3).unwrap();
        let fg: Vec<usize> = ids.iter().copied().filter(|&k| k > 0).collect();
        assert!(!fg.is_empty());
        assert!(fg.iter().all(|&k| k == fg[0]), "one class per sample");
        ones += usize::from(fg[0] == 1);
        let layout = long_range_layout(&spec, i).unwrap();
        assert_eq!(layout.class(), fg[0]);
        assert!(layout.marker_distance() > min_marker_distance(spec.dims));
    }
    let frac = ones as f64 / data.len() as f64;
    assert!((0.4..=0.6).contains(&frac), "{frac}");

    for s in gen_local_pattern::<f64>(&TaskSpec::new(TaskKind::LocalPattern, 5, 20)).unwrap() {
        let ids = label_ids(&s.label, 3).unwrap();
        assert!(ids.iter().any(|&k| k > 0));
    }
}

#[test]
fn invalid_dims_rejected() {
    let spec = TaskSpec { dims: (24, 32, 16), ..TaskSpec::new(TaskKind::LongRange, 0, 1) };
    assert!(gen_long_range::<f64>(&spec).is_err());
    let spec = TaskSpec { count: 0, ..TaskSpec::new(TaskKind::LocalPattern, 0, 1) };
    assert!(gen_local_pattern::<f64>(&spec).is_err());
}

const BINS: usize = 96;

fn bin(v: f64) -> usize {
    (((v + 4.0) / 8.0 * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

/// Best classifier that sees a single voxel's intensity: histogram counts
/// per class learned on one set, argmax applied to another.
fn voxel_local_oracle(train: &[Sample<f64>], test: &[Sample<f64>]) -> EvalReport {
    let mut counts = vec![[0usize; 3]; BINS];
    for s in train {
        for (&v, &l) in s.image.data().iter().zip(s.label.data()) {
            counts[bin(v)][l as usize] += 1;
        }
    }
    let decide: Vec<usize> = counts
        .iter()
        .map(|c| (0..3).max_by_key(|&k| (c[k], std::cmp::Reverse(k))).unwrap())
        .collect();
    let per: Vec<Vec<f64>> = test
        .iter()
        .map(|s| {
            let pred: Vec<usize> = s.image.data().iter().map(|&v| decide[bin(v)]).collect();
            hard_dice(&pred, &label_ids(&s.label, 3).unwrap(), 3)
        })
        .collect();
    EvalReport::from_samples(&per)
}

#[test]
fn voxel_local_oracle_cannot_solve_long_range() {
    let train = gen_long_range::<f64>(&TaskSpec::new(TaskKind::LongRange, 21, 200)).unwrap();
    let test = gen_long_range::<f64>(&TaskSpec::new(TaskKind::LongRange, 22, 100)).unwrap();
    let r = voxel_local_oracle(&train, &test);
    assert!(r.mdice <= 0.55, "{r:?}");

    let train = gen_local_pattern::<f64>(&TaskSpec::new(TaskKind::LocalPattern, 21, 100)).unwrap();
    let test = gen_local_pattern::<f64>(&TaskSpec::new(TaskKind::LocalPattern, 22, 50)).unwrap();
    let r = voxel_local_oracle(&train, &test);
    assert!(r.mdice > 0.85, "local task is voxel-solvable: {r:?}");
}
