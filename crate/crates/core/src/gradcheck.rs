//! Central finite differences, used to check hand-written backward passes.

/// Numerical partial derivatives of `f` at `x` for the coordinates in
/// `indices`, using central differences with the given `step`.
pub fn central_difference<F>(x: &[f64], indices: &[usize], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, or 0 when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na + nb == 0.0 {
        0.0
    } else {
        diff / (na + nb)
    }
}

/// Evenly spread sample of `count` indices from `0..len` (all of them if
/// `len <= count`).
pub fn spread_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|k| k * len / count + (k * 7919) % (len / count).max(1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let x = [1.0, -2.0, 0.5];
        let g = central_difference(&x, &[0, 1, 2], 1e-5, |v| v.iter().map(|a| a * a * a).sum());
        let exact: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
        assert!(relative_error(&g, &exact) < 1e-9);
    }

    #[test]
    fn spread_is_in_range_and_distinct() {
        let idx = spread_indices(1000, 20);
        assert_eq!(idx.len(), 20);
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && *idx.last().unwrap() < 1000);
        assert_eq!(spread_indices(5, 20), vec![0, 1, 2, 3, 4]);
    }
}
