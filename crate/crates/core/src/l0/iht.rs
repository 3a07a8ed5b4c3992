use crate::error::{Error, Result};
use crate::linalg::{residuals, solve_least_squares, CoefVector, Dataset};

use super::{check_budget, complement, SparsitySolution};

pub const IHT_MAX_ITER: usize = 100;
pub const IHT_BETA_TOL: f64 = 1e-10;

/// Rows of the `k` largest `|c_i|`, sorted ascending. Equal magnitudes are
/// ranked by lower index first.
pub fn top_k_indices(c: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(c.len());
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    let cmp = |a: &usize, b: &usize| c[*b].abs().total_cmp(&c[*a].abs()).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

/// Keeps the `k` largest-magnitude entries of `c` and zeroes the rest.
pub fn hard_threshold(c: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    for i in top_k_indices(c, k) {
        out[i] = c[i];
    }
    out
}

/// Iterative hard thresholding from `beta0`.
///
/// Each pass flags the `k` largest residuals and refits least squares on the
/// remaining rows. Stops when the flagged set repeats, when the coefficients
/// move less than [`IHT_BETA_TOL`] in max-norm, or after `max_iter` passes.
pub fn fit_iht(data: &Dataset, k: usize, beta0: &CoefVector, max_iter: usize) -> Result<SparsitySolution> {
    check_budget(data, k)?;
    if beta0.len() != data.width() {
        return Err(Error::Dimension(format!(
            "initial coefficients of length {} for design width {}",
            beta0.len(),
            data.width()
        )));
    }
    if beta0.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("initial coefficients must be finite".into()));
    }
    let mut beta = beta0.clone();
    let mut support: Option<Vec<usize>> = None;
    let mut objective = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let r = residuals(data, &beta)?;
        let next_support = top_k_indices(&r, k);
        if support.as_ref() == Some(&next_support) {
            break;
        }
        let inliers = complement(data.n(), &next_support);
        let next_beta = solve_least_squares(data, &inliers)?;
        let next_obj = 0.5
            * inliers
                .iter()
                .map(|&i| {
                    let e = data.y()[i] - data.predict_row(i, &next_beta);
                    e * e
                })
                .sum::<f64>();
        debug_assert!(
            next_obj <= objective + 1e-12 * (1.0 + next_obj),
            "hard thresholding objective increased: {objective} -> {next_obj}"
        );
        let change = next_beta.max_abs_diff(&beta);
        beta = next_beta;
        support = Some(next_support);
        objective = next_obj;
        if change < IHT_BETA_TOL {
            break;
        }
    }
    let outliers = support.unwrap_or_default();
    let inliers = complement(data.n(), &outliers);
    Ok(SparsitySolution::assemble(data, k, beta, inliers, outliers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::{fit_lad, fit_ols};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn keeps_largest_magnitude() {
        assert_eq!(hard_threshold(&[3.0, -5.0, 1.0], 1), vec![0.0, -5.0, 0.0]);
        assert_eq!(hard_threshold(&[3.0, -5.0, 1.0], 0), vec![0.0; 3]);
        assert_eq!(hard_threshold(&[2.0, -2.0, 2.0], 2), vec![2.0, -2.0, 0.0]);
        assert_eq!(hard_threshold(&[1.0, 2.0], 5), vec![1.0, 2.0]);
    }

    /// argmin over all supports of size k of ||alpha - c||^2.
    fn exhaustive_projection(c: &[f64], k: usize) -> f64 {
        let n = c.len();
        let total: f64 = c.iter().map(|v| v * v).sum();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let kept: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| c[i] * c[i]).sum();
            best = best.min(total - kept);
        }
        best
    }

    #[test]
    fn matches_exhaustive_support_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let c: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        let h = hard_threshold(&c, 4);
        let dist: f64 = h.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((dist - exhaustive_projection(&c, 4)).abs() < 1e-12);
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 4);
    }

    fn line_with_outlier(seed: u64, n: usize, outlier: usize, shift: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            rows.push(vec![x]);
            y.push(0.5 + x + e + if i == outlier { shift } else { 0.0 });
        }
        Dataset::new(y, &rows, true).unwrap()
    }

    #[test]
    fn k_zero_is_ols() {
        let data = line_with_outlier(1, 30, 4, 0.0);
        let ols = fit_ols(&data).unwrap();
        let sol = fit_iht(&data, 0, &CoefVector::zeros(2), IHT_MAX_ITER).unwrap();
        assert!(sol.outliers.is_empty());
        assert_eq!(sol.beta, ols.beta);
        assert!((sol.objective - ols.objective).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 - 3.0 * r[0]).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let sol = fit_iht(&data, 3, &CoefVector::zeros(2), IHT_MAX_ITER).unwrap();
        assert!(sol.objective < 1e-20);
        assert!((sol.beta[0] - 2.0).abs() < 1e-10 && (sol.beta[1] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn gross_outlier_is_detected() {
        let data = line_with_outlier(7, 50, 23, 100.0);
        let beta0 = fit_lad(&data).unwrap().beta;
        let sol = fit_iht(&data, 1, &beta0, IHT_MAX_ITER).unwrap();
        assert_eq!(sol.outliers, vec![23]);
        let clean: Vec<usize> = (0..50).filter(|&i| i != 23).collect();
        let reference = solve_least_squares(&data, &clean).unwrap();
        assert!(sol.beta.max_abs_diff(&reference) < 1e-6);
        // one more pass keeps the same support
        let again = fit_iht(&data, 1, &sol.beta, IHT_MAX_ITER).unwrap();
        assert_eq!(again.outliers, sol.outliers);
    }

    #[test]
    fn rejects_infeasible_budget() {
        let data = line_with_outlier(1, 5, 0, 0.0);
        assert!(matches!(
            fit_iht(&data, 4, &CoefVector::zeros(2), 10),
            Err(Error::TooFewInliers { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn projection_is_optimal(c in proptest::collection::vec(-10.0f64..10.0, 1..12), k_frac in 0.0f64..1.0) {
            let k = ((c.len() as f64) * k_frac).round() as usize;
            let h = hard_threshold(&c, k);
            let dist: f64 = h.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            proptest::prop_assert!((dist - exhaustive_projection(&c, k)).abs() <= 1e-12 * (1.0 + dist));
        }
    }
}
