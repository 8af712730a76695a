use gsconv_core::{
    apply_group_shift_naive, apply_permutation, build_permutation, group_shift_backward, invert_permutation,
    GroupShiftConfig, Shape5, VolumeTensor,
};
use proptest::prelude::*;

/// Valid (dims, config) pairs: block extents and group counts drawn
/// separately so divisibility holds by construction.
fn case() -> impl Strategy<Value = (Shape5, GroupShiftConfig, u64)> {
    (1usize..4, 1usize..4, 1usize..3, 1usize..3, 1usize..3, 1usize..3, 1usize..3, 0usize..3, 0usize..4, any::<u64>())
        .prop_map(|(gd, gh, gw, bd, bh, bw, n, cg, extra, seed)| {
            let g = gd * gh * gw;
            let cfg = GroupShiftConfig::new((gd, gh, gw), cg).unwrap();
            let dims = Shape5::new(n, gd * bd, gh * bh, gw * bw, g * cg + extra + 1).unwrap();
            (dims, cfg, seed)
        })
}

fn values(s: Shape5, seed: u64) -> VolumeTensor<f64> {
    VolumeTensor::from_fn(s, |p| {
        let h = (s.linear_index(p).unwrap() as u64 ^ seed).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

proptest! {
    #[test]
    fn table_is_a_bijection_matching_the_oracle((dims, cfg, seed) in case()) {
        let t = build_permutation(&cfg, dims).unwrap();
        prop_assert!(t.is_bijective());
        let x = values(dims, seed);
        let fast = apply_permutation(&x, &t).unwrap();
        prop_assert_eq!(&fast, &apply_group_shift_naive(&x, &cfg).unwrap());
        prop_assert!(invert_permutation(&t).compose(&t).unwrap().is_identity());
    }

    #[test]
    fn backward_is_the_adjoint((dims, cfg, seed) in case()) {
        let t = build_permutation(&cfg, dims).unwrap();
        let x = values(dims, seed);
        let g = values(dims, seed.wrapping_add(1));
        let lhs = apply_permutation(&x, &t).unwrap().dot(&g).unwrap();
        let rhs = x.dot(&group_shift_backward(&g, &t).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn applying_g_times_is_identity((dims, cfg, seed) in case()) {
        let t = build_permutation(&cfg, dims).unwrap();
        let x = values(dims, seed);
        let mut y = x.clone();
        for _ in 0..cfg.groups.count() {
            y = apply_permutation(&y, &t).unwrap();
        }
        prop_assert_eq!(y, x);
    }
}
