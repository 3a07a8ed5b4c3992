//! Dense least squares on row subsets of a regression design.
//!
//! The design is stored row-major with the intercept column (when requested)
//! materialized as column 0, so every estimator indexes coefficients the same
//! way: intercept first, then slopes in the order of the input regressors.

use serde::{Deserialize, Serialize};
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the leading pivot mark the restricted
/// design as singular.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Response vector and regressors of a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    /// Row-major `n x width` design, intercept column included.
    design: Vec<f64>,
    n: usize,
    d: usize,
    add_intercept: bool,
}

impl Dataset {
    /// Builds a dataset from a response and one slice of regressors per row.
    pub fn new(y: Vec<f64>, rows: &[Vec<f64>], add_intercept: bool) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} regressor rows for {} responses",
                rows.len(),
                y.len()
            )));
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut x = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dimension(format!(
                    "row {i} has {} regressors, expected {d}",
                    row.len()
                )));
            }
            x.extend_from_slice(row);
        }
        Self::from_row_major(y, x, d, add_intercept)
    }

    /// Builds a dataset from a row-major `n x d` regressor buffer.
    pub fn from_row_major(y: Vec<f64>, x: Vec<f64>, d: usize, add_intercept: bool) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        if x.len() != n * d {
            return Err(Error::Dimension(format!(
                "regressor buffer has {} entries, expected {n} x {d}",
                x.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response at row {i}")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite regressor at row {}, column {}",
                k / d.max(1),
                k % d.max(1)
            )));
        }
        let width = d + usize::from(add_intercept);
        if width == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        let mut design = Vec::with_capacity(n * width);
        for i in 0..n {
            if add_intercept {
                design.push(1.0);
            }
            design.extend_from_slice(&x[i * d..(i + 1) * d]);
        }
        Ok(Self { y, design, n, d, add_intercept })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of regressors, excluding the intercept.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of coefficients: `d + 1` with an intercept, `d` without.
    pub fn width(&self) -> usize {
        self.d + usize::from(self.add_intercept)
    }

    pub fn add_intercept(&self) -> bool {
        self.add_intercept
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row `i` of the effective design, `[1, x_i]` when an intercept is used.
    #[inline]
    pub fn design_row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.design[i * w..(i + 1) * w]
    }

    /// Regressors of row `i` without the intercept.
    pub fn x_row(&self, i: usize) -> &[f64] {
        let row = self.design_row(i);
        if self.add_intercept {
            &row[1..]
        } else {
            row
        }
    }

    /// Fitted value `[1, x_i]' beta`.
    #[inline]
    pub fn predict_row(&self, i: usize, beta: &[f64]) -> f64 {
        dot(self.design_row(i), beta)
    }

    /// Copy restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let w = self.width();
        let mut design = Vec::with_capacity(rows.len() * w);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            design.extend_from_slice(self.design_row(i));
            y.push(self.y[i]);
        }
        Dataset { y, design, n: rows.len(), d: self.d, add_intercept: self.add_intercept }
    }

    /// Same design with a different response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n {
            return Err(Error::Dimension(format!("{} responses for {} rows", y.len(), self.n)));
        }
        Ok(Dataset { y, ..self.clone() })
    }
}

/// Regression coefficients, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefVector(pub Vec<f64>);

impl CoefVector {
    pub fn zeros(width: usize) -> Self {
        Self(vec![0.0; width])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Max-norm distance to another coefficient vector.
    pub fn max_abs_diff(&self, other: &CoefVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for CoefVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CoefVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for CoefVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least squares over the rows in `active`.
pub fn solve_least_squares(data: &Dataset, active: &[usize]) -> Result<CoefVector> {
    solve_rows(data, active, data.y(), None)
}

/// Least squares of `target` on the full design with optional row weights.
///
/// Weights multiply squared residuals, so each row is scaled by `sqrt(w_i)`.
pub fn solve_weighted_least_squares(
    data: &Dataset,
    target: &[f64],
    weights: Option<&[f64]>,
) -> Result<CoefVector> {
    if target.len() != data.n() {
        return Err(Error::Dimension(format!("target of length {} for {} rows", target.len(), data.n())));
    }
    let all: Vec<usize> = (0..data.n()).collect();
    solve_rows(data, &all, target, weights)
}

fn solve_rows(
    data: &Dataset,
    rows: &[usize],
    target: &[f64],
    weights: Option<&[f64]>,
) -> Result<CoefVector> {
    let p = data.width();
    let m = rows.len();
    if m < p {
        return Err(Error::TooFewRows { needed: p, got: m });
    }
    // column-major copy of the restricted design
    let mut a = vec![0.0; m * p];
    let mut b = vec![0.0; m];
    for (r, &i) in rows.iter().enumerate() {
        let s = weights.map_or(1.0, |w| w[i].sqrt());
        for (j, v) in data.design_row(i).iter().enumerate() {
            a[j * m + r] = s * v;
        }
        b[r] = s * target[i];
    }
    pivoted_qr_solve(&mut a, &mut b, m, p).map(CoefVector)
}

/// Householder QR with column pivoting; `a` is column-major `m x p`.
/// Overwrites `a` and `b`.
fn pivoted_qr_solve(a: &mut [f64], b: &mut [f64], m: usize, p: usize) -> Result<Vec<f64>> {
    let mut perm: Vec<usize> = (0..p).collect();
    let mut diag = vec![0.0; p];
    let mut lead = 0.0;
    for k in 0..p {
        // pivot on the largest remaining column norm
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..p {
            let col = &a[j * m + k..(j + 1) * m];
            let nrm: f64 = col.iter().map(|v| v * v).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                a.swap(k * m + i, best * m + i);
            }
            perm.swap(k, best);
        }
        let norm = best_norm.max(0.0).sqrt();
        if k == 0 {
            lead = norm;
            if lead == 0.0 {
                return Err(Error::RankDeficient);
            }
        }
        if norm <= RANK_TOLERANCE * lead {
            return Err(Error::RankDeficient);
        }
        let x0 = a[k * m + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place
        a[k * m + k] = x0 - alpha;
        let vtv: f64 = a[k * m + k..(k + 1) * m].iter().map(|v| v * v).sum();
        if vtv > 0.0 {
            for j in k + 1..p {
                let s: f64 = (k..m).map(|i| a[k * m + i] * a[j * m + i]).sum::<f64>() * 2.0 / vtv;
                for i in k..m {
                    a[j * m + i] -= s * a[k * m + i];
                }
            }
            let s: f64 = (k..m).map(|i| a[k * m + i] * b[i]).sum::<f64>() * 2.0 / vtv;
            for i in k..m {
                b[i] -= s * a[k * m + i];
            }
        }
        diag[k] = alpha;
    }
    // back substitution on R z = (Q'b)[..p]
    let mut z = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in k + 1..p {
            s -= a[j * m + k] * z[j];
        }
        z[k] = s / diag[k];
    }
    let mut beta = vec![0.0; p];
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = z[k];
    }
    Ok(beta)
}

/// `r_i = y_i - [1, x_i]' beta` for every row.
pub fn residuals(data: &Dataset, beta: &CoefVector) -> Result<Vec<f64>> {
    if beta.len() != data.width() {
        return Err(Error::Dimension(format!(
            "coefficient vector of length {} for design width {}",
            beta.len(),
            data.width()
        )));
    }
    Ok((0..data.n()).map(|i| data.y()[i] - data.predict_row(i, beta)).collect())
}

/// Sum of squared residuals over `rows`.
pub(crate) fn rss_on(data: &Dataset, beta: &[f64], rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            let r = data.y()[i] - data.predict_row(i, beta);
            r * r
        })
        .sum()
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        Dataset::new(y, &rows, true).unwrap()
    }

    /// Normal equations solved by Gauss-Jordan elimination; independent of QR.
    fn normal_equation_oracle(data: &Dataset, rows: &[usize]) -> Vec<f64> {
        let p = data.width();
        let mut m = vec![vec![0.0; p + 1]; p];
        for &i in rows {
            let x = data.design_row(i);
            for a in 0..p {
                for b in 0..p {
                    m[a][b] += x[a] * x[b];
                }
                m[a][p] += x[a] * data.y()[i];
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            let d = m[c][c];
            for v in m[c].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != c {
                    let f = m[r][c];
                    let row_c = m[c].clone();
                    for (v, w) in m[r].iter_mut().zip(row_c) {
                        *v -= f * w;
                    }
                }
            }
        }
        m.iter().map(|row| row[p]).collect()
    }

    #[test]
    fn exact_line_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let beta = solve_least_squares(&data, &all).unwrap();
        assert!(beta[0].abs() < 1e-12);
        assert!((beta[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_gives_the_constant() {
        let data = Dataset::from_row_major(vec![2.5; 7], vec![], 0, true).unwrap();
        let all: Vec<usize> = (0..7).collect();
        let beta = solve_least_squares(&data, &all).unwrap();
        assert_eq!(beta.len(), 1);
        assert!((beta[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn qr_matches_normal_equations_on_random_instance() {
        let data = random_dataset(12, 3, 7);
        let all: Vec<usize> = (0..12).collect();
        let beta = solve_least_squares(&data, &all).unwrap();
        let oracle = normal_equation_oracle(&data, &all);
        for (a, b) in beta.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn residuals_match_direct_loop() {
        let data = random_dataset(8, 2, 3);
        let beta = CoefVector(vec![0.3, -1.2, 0.7]);
        let r = residuals(&data, &beta).unwrap();
        for i in 0..8 {
            let x = data.x_row(i);
            let expected = data.y()[i] - (0.3 - 1.2 * x[0] + 0.7 * x[1]);
            assert!((r[i] - expected).abs() < 1e-14);
        }
        let zero = residuals(&data, &CoefVector::zeros(3)).unwrap();
        assert_eq!(zero, data.y());
    }

    #[test]
    fn perfect_fit_has_zero_residuals() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let beta = CoefVector(vec![1.0, 2.0, -1.0]);
        assert!(residuals(&data, &beta).unwrap().iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn singular_subset_is_rank_deficient() {
        // two identical x values cannot pin down a slope
        let rows = vec![vec![1.0], vec![1.0], vec![3.0]];
        let data = Dataset::new(vec![0.0, 1.0, 2.0], &rows, true).unwrap();
        assert_eq!(solve_least_squares(&data, &[0, 1]), Err(Error::RankDeficient));
        assert!(solve_least_squares(&data, &[0, 2]).is_ok());
    }

    #[test]
    fn too_few_rows_is_reported() {
        let data = random_dataset(5, 2, 1);
        assert_eq!(
            solve_least_squares(&data, &[0, 1]),
            Err(Error::TooFewRows { needed: 3, got: 2 })
        );
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let data = random_dataset(5, 2, 1);
        assert!(matches!(residuals(&data, &CoefVector::zeros(2)), Err(Error::Dimension(_))));
        assert!(Dataset::from_row_major(vec![1.0, f64::NAN], vec![0.0, 1.0], 1, true).is_err());
    }

    proptest::proptest! {
        #[test]
        fn residuals_are_orthogonal_to_the_design(seed in 0u64..500, n in 6usize..30) {
            let data = random_dataset(n, 2, seed);
            let active: Vec<usize> = (0..n).filter(|i| !(i * 7 + seed as usize).is_multiple_of(5)).collect();
            proptest::prop_assume!(active.len() >= 4);
            let beta = solve_least_squares(&data, &active).unwrap();
            let ynorm = active.iter().map(|&i| data.y()[i].powi(2)).sum::<f64>().sqrt();
            for j in 0..data.width() {
                let mut inner = 0.0;
                let mut cnorm = 0.0;
                for &i in &active {
                    let x = data.design_row(i)[j];
                    inner += x * (data.y()[i] - data.predict_row(i, &beta));
                    cnorm += x * x;
                }
                proptest::prop_assert!(inner.abs() <= 1e-8 * ynorm * cnorm.sqrt());
            }
            let oracle = normal_equation_oracle(&data, &active);
            for (a, b) in beta.iter().zip(&oracle) {
                proptest::prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
            }
            // bit-identical on repeat
            proptest::prop_assert_eq!(beta, solve_least_squares(&data, &active).unwrap());
        }
    }
}
