use crate::complex::ComplexArray;
use crate::error::{Error, Result};
use crate::harmonic::GridKind;

/// `||x_true - x_hat|| / ||x_true||`.
pub fn nmse_metric(x_hat: &ComplexArray, x_true: &ComplexArray) -> Result<f64> {
    let den = x_true.norm();
    if den == 0.0 {
        return Err(Error::UndefinedLoss("ground truth is zero".into()));
    }
    Ok(x_true.sub(x_hat)?.norm() / den)
}

/// Indices of the `k` largest magnitudes, ties going to the lower index.
pub fn top_k(x: &ComplexArray, k: usize) -> Vec<usize> {
    let mags = x.abs();
    let mut idx: Vec<usize> = (0..mags.len()).collect();
    idx.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Indices of the nonzero entries.
pub fn support(x: &ComplexArray) -> Vec<usize> {
    (0..x.len()).filter(|&i| x.re()[i] != 0.0 || x.im()[i] != 0.0).collect()
}

/// Fraction of the true support found among the `k` largest entries of
/// `x_hat`.
pub fn hit_rate_metric(x_hat: &ComplexArray, x_true: &ComplexArray, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("hit rate needs K >= 1"));
    }
    if x_hat.len() != x_true.len() {
        return Err(Error::dim("estimate and truth differ in length"));
    }
    let truth = support(x_true);
    let picked = top_k(x_hat, k);
    let hits = truth.iter().filter(|t| picked.contains(t)).count();
    Ok(hits as f64 / k as f64)
}

/// Fraction of the `k` largest entries of `x_hat` that lie within `cells`
/// grid cells of some true component, distances taken per axis on the
/// periodic grid.
pub fn tolerant_hit_rate(
    x_hat: &ComplexArray,
    truth: &[usize],
    k: usize,
    grid: GridKind,
    cells: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("hit rate needs K >= 1"));
    }
    let picked = top_k(x_hat, k);
    let hits = picked
        .iter()
        .filter(|&&p| truth.iter().any(|&t| grid.cell_distance(p, t) <= cells))
        .count();
    Ok(hits as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use num_complex::Complex64;
    use rand::Rng;

    fn spike(m: usize, at: &[usize]) -> ComplexArray {
        let mut x = ComplexArray::zeros_vec(m);
        for (j, &i) in at.iter().enumerate() {
            x.set(i, Complex64::new(1.0 + j as f64, -0.5));
        }
        x
    }

    #[test]
    fn nmse_cases() {
        let x = spike(8, &[1, 4]);
        assert_eq!(nmse_metric(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse_metric(&ComplexArray::zeros_vec(8), &x).unwrap(), 1.0);
        assert!((nmse_metric(&x.scaled(2.0), &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse_metric(&x, &ComplexArray::zeros_vec(8)).is_err());
    }

    #[test]
    fn hit_rate_cases() {
        let x = spike(512, &[100, 200, 300, 400, 500]);
        assert_eq!(hit_rate_metric(&x, &x, 5).unwrap(), 1.0);
        assert_eq!(hit_rate_metric(&ComplexArray::zeros_vec(512), &x, 5).unwrap(), 0.0);
        assert!(hit_rate_metric(&x, &x, 0).is_err());
        assert_eq!(top_k(&ComplexArray::zeros_vec(6), 3), vec![0, 1, 2]);
    }

    /// Enumerates every k-subset and returns the one whose members all beat
    /// every non-member (larger magnitude, or equal magnitude and lower index).
    fn brute_top_k(mags: &[f64], k: usize) -> Vec<usize> {
        let n = mags.len();
        let mut best: Option<Vec<usize>> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let dominates = set.iter().all(|&i| {
                (0..n)
                    .filter(|j| !set.contains(j))
                    .all(|j| mags[i] > mags[j] || (mags[i] == mags[j] && i < j))
            });
            if dominates {
                assert!(best.is_none(), "top-k set must be unique under the tie-break");
                best = Some(set);
            }
        }
        best.unwrap()
    }

    #[test]
    fn top_k_matches_exhaustive_search() {
        let mut rng = seeded(5);
        for _ in 0..1000 {
            let n = rng.random_range(1..=10);
            let k = rng.random_range(1..=n);
            // Coarse values force ties.
            let vals: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random_range(0..4) as f64, 0.0)).collect();
            let truth_idx: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
            let x_hat = ComplexArray::from_complex(&vals);
            let mut got = top_k(&x_hat, k);
            got.sort_unstable();
            let want = brute_top_k(&x_hat.abs(), k);
            assert_eq!(got, want);
            let x_true = spike(n, &truth_idx);
            let hits = truth_idx.iter().filter(|t| want.contains(t)).count();
            assert_eq!(hit_rate_metric(&x_hat, &x_true, k).unwrap(), hits as f64 / k as f64);
        }
    }

    #[test]
    fn tolerant_matching_wraps_and_uses_both_axes() {
        let x = spike(16, &[0]);
        assert_eq!(tolerant_hit_rate(&x, &[15], 1, GridKind::OneD { m: 16 }, 1).unwrap(), 1.0);
        assert_eq!(tolerant_hit_rate(&x, &[14], 1, GridKind::OneD { m: 16 }, 1).unwrap(), 0.0);
        let g = GridKind::TwoD { m1: 4, m2: 4 };
        // index 5 = (1, 1), index 0 = (0, 0): one cell on each axis.
        assert_eq!(tolerant_hit_rate(&spike(16, &[5]), &[0], 1, g, 1).unwrap(), 1.0);
        assert_eq!(tolerant_hit_rate(&spike(16, &[10]), &[0], 1, g, 1).unwrap(), 0.0);
    }
}
