//! Self-checks for group shift tables, used by `gsconv verify-gs`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::table::build_bound;
use super::{apply_group_shift_naive, apply_permutation, invert_permutation, GroupShiftConfig};
use super::{BoundGroupShift, PermutationTable};
use crate::error::Result;
use crate::tensor::{Coord5, Shape5, VolumeTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        CheckOutcome { name, passed, detail: detail.into() }
    }
}

/// Runs every check for `cfg` on tensors of shape `dims`.
pub fn verify_config(cfg: &GroupShiftConfig, dims: Shape5, seed: u64) -> Result<Vec<CheckOutcome>> {
    let bound = cfg.bind(dims)?;
    let table = build_bound(&bound);
    Ok(verify_table(&bound, &table, dims, seed))
}

/// Checks `table` against the reference scatter for `bound`. Exposed
/// separately so a deliberately wrong table can be fed in.
pub fn verify_table(
    bound: &BoundGroupShift,
    table: &PermutationTable,
    dims: Shape5,
    seed: u64,
) -> Vec<CheckOutcome> {
    let cfg = bound.config();
    let mut out = Vec::new();

    let bij = table.is_bijective() && table.dims() == dims.with_batch(1);
    out.push(CheckOutcome::new("bijective", bij, format!("{} entries", table.len())));
    if !bij {
        return out;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = VolumeTensor::from_vec(dims, data).expect("dims validated");
    let fast = apply_permutation(&x, table).expect("dims match");
    let naive = apply_group_shift_naive(&x, cfg).expect("cfg bound");
    out.push(CheckOutcome::new(
        "oracle_equivalence",
        fast.data().iter().zip(naive.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "table gather vs reference scatter",
    ));

    let inv = invert_permutation(table);
    let round = apply_permutation(&fast, &inv).expect("dims match");
    let composed = inv.compose(table).map(|t| t.is_identity()).unwrap_or(false);
    out.push(CheckOutcome::new("inverse", composed && round == x, "inverse ∘ table = identity"));

    let mut a: Vec<f64> = x.data().to_vec();
    let mut b: Vec<f64> = fast.data().to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    out.push(CheckOutcome::new("value_multiset", a == b, "sorted values equal"));

    let channel_tagged = VolumeTensor::from_fn(dims, |p| p.c as f64);
    let shifted = apply_permutation(&channel_tagged, table).expect("dims match");
    out.push(CheckOutcome::new(
        "channel_preservation",
        shifted == channel_tagged,
        "c' = c for every element",
    ));

    let (ok, detail) = all_groups_represented(bound, table);
    out.push(CheckOutcome::new("all_groups_represented", ok, detail));
    out
}

/// Tags each shifted channel with its origin spatial group and decodes the
/// origins after the shift: destination group `j`, channel group `k` must
/// hold origin `(j - k) mod G`, so every destination sees all `G` origins.
fn all_groups_represented(bound: &BoundGroupShift, table: &PermutationTable) -> (bool, String) {
    let cfg = bound.config();
    if cfg.shifted == 0 {
        return (true, "no shifted channels".into());
    }
    let dims = bound.dims();
    let g = bound.group_count();
    let tagged = VolumeTensor::from_fn(dims, |p| {
        if p.c < cfg.shifted {
            bound.spatial_group(p.x, p.y, p.z) as f64
        } else {
            -1.0
        }
    });
    let shifted = apply_permutation(&tagged, table).expect("dims match");
    for x in 0..dims.d {
        for y in 0..dims.h {
            for z in 0..dims.w {
                let j = bound.spatial_group(x, y, z);
                let mut covered = vec![false; g];
                for c in 0..cfg.shifted {
                    let k = c / cfg.channels_per_group;
                    let origin = shifted.get(Coord5::new(0, x, y, z, c)).unwrap() as usize;
                    if origin != (j + g - k) % g {
                        return (false, format!("voxel ({x},{y},{z}) channel {c}: origin {origin}"));
                    }
                    covered[origin] = true;
                }
                if !covered.iter().all(|&v| v) {
                    return (false, format!("voxel ({x},{y},{z}) misses an origin group"));
                }
            }
        }
    }
    (true, format!("{g} origins at every voxel"))
}

/// Small grid of shapes and configs exercised by default.
pub fn builtin_grid() -> Vec<(Shape5, GroupShiftConfig)> {
    let mut grid = Vec::new();
    let shapes = [(2, 2, 2, 4), (4, 4, 2, 8), (4, 6, 2, 8), (6, 6, 6, 8), (8, 4, 4, 16)];
    let groups = [(1, 1, 1), (2, 1, 1), (1, 2, 1), (1, 1, 2), (2, 2, 1), (2, 2, 2), (1, 3, 1), (2, 3, 1)];
    for &(d, h, w, c) in &shapes {
        let dims = Shape5 { n: 1, d, h, w, c };
        for &gr in &groups {
            let count = gr.0 * gr.1 * gr.2;
            for cg in 1..=c / count {
                let cfg = GroupShiftConfig::new(gr, cg).expect("valid");
                if cfg.bind(dims).is_ok() {
                    grid.push((dims, cfg));
                }
            }
        }
    }
    grid
}
