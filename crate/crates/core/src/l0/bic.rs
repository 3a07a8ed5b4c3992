use serde::{Deserialize, Serialize};

use crate::classic::{fit_lad, fit_ols};
use crate::error::{Error, Result};
use crate::linalg::{CoefVector, Dataset};

use super::search::{fit_lcs, neighborhood_search};
use super::SparsitySolution;

/// Residual sums below this make the log term meaningless.
const RSS_FLOOR: f64 = 1e-300;

/// `true` when the residual sum is zero up to rounding, either absolutely or
/// relative to `||y||^2`.
pub(crate) fn degenerate_rss(rss: f64, y: &[f64]) -> bool {
    let yy: f64 = y.iter().map(|v| v * v).sum();
    !(rss >= RSS_FLOOR) || rss <= 1e-24 * yy
}

fn criterion(n: usize, rss: f64, k: usize) -> Result<f64> {
    if !(rss >= RSS_FLOOR) {
        return Err(Error::DegenerateFit);
    }
    let n = n as f64;
    Ok(n * (rss / n).ln() + k as f64 * n.ln())
}

/// `N log(RSS / N) + k log N`, with `RSS = 2 * objective` (outlier rows are
/// absorbed by their effects) and `k` the solution's budget.
pub fn bic_score(data: &Dataset, sol: &SparsitySolution) -> Result<f64> {
    if degenerate_rss(2.0 * sol.objective, data.y()) {
        return Err(Error::DegenerateFit);
    }
    criterion(data.n(), 2.0 * sol.objective, sol.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub k: usize,
    pub objective: f64,
    /// `None` for a perfect fit, which ranks below every finite score.
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub solution: SparsitySolution,
    /// One entry per budget `1..=max_k`.
    pub trace: Vec<BicEntry>,
    /// Score of the plain least-squares fit, reported for reference only;
    /// budget zero is never selected.
    pub ols_bic: Option<f64>,
}

fn rank(b: Option<f64>) -> f64 {
    b.unwrap_or(f64::NEG_INFINITY)
}

/// Runs the neighborhood search over budgets `1..=max_k` and returns the
/// budget with the smallest criterion. Ties go to the smaller budget.
pub fn select_k_bic(data: &Dataset, beta0: &CoefVector, max_k: usize, l: usize) -> Result<KSelection> {
    let path = neighborhood_search(data, beta0, max_k, l)?;
    let trace: Vec<BicEntry> = path
        .solutions
        .iter()
        .map(|s| BicEntry { k: s.k, objective: s.objective, bic: bic_score(data, s).ok() })
        .collect();
    let mut best = 0;
    for (i, e) in trace.iter().enumerate() {
        if rank(e.bic) < rank(trace[best].bic) {
            best = i;
        }
    }
    let ols_bic = fit_ols(data)
        .ok()
        .filter(|f| !degenerate_rss(2.0 * f.objective, data.y()))
        .and_then(|f| criterion(data.n(), 2.0 * f.objective, 0).ok());
    let solution = path.solutions.into_iter().nth(best).expect("nonempty path");
    Ok(KSelection { k: best + 1, solution, trace, ols_bic })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0AutoOptions {
    pub max_k: usize,
    /// Exchange order used while scanning budgets.
    pub l_select: usize,
    /// Exchange order of the final fit at the selected budget.
    pub l_final: usize,
}

impl L0AutoOptions {
    pub fn new(max_k: usize) -> Self {
        Self { max_k, l_select: 1, l_final: 2 }
    }
}

/// Budget selection by information criterion from a LAD start, followed by
/// local search of order `l_final` at the selected budget.
pub fn fit_l0_auto(data: &Dataset, opts: &L0AutoOptions) -> Result<KSelection> {
    let beta0 = fit_lad(data)?.beta;
    let mut sel = select_k_bic(data, &beta0, opts.max_k, opts.l_select)?;
    if opts.l_final != opts.l_select {
        let polished = fit_lcs(data, sel.k, &sel.solution.beta, opts.l_final)?;
        if polished.objective < sel.solution.objective {
            sel.solution = polished;
        }
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::residuals;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{StandardNormal, Uniform};

    fn planted(n: usize, outliers: &[usize], shift: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Uniform::new(-1.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let y = rows
            .iter()
            .enumerate()
            .map(|(i, r)| 0.5 + r[0] + rng.sample(noise) + if outliers.contains(&i) { shift } else { 0.0 })
            .collect();
        Dataset::new(y, &rows, true).unwrap()
    }

    #[test]
    fn arithmetic_of_the_criterion() {
        let v = criterion(100, 100.0, 5).unwrap();
        assert!((v - 5.0 * 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_is_degenerate() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0]).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let sol = SparsitySolution::from_outliers(&data, 1, vec![0]).unwrap();
        assert_eq!(bic_score(&data, &sol), Err(Error::DegenerateFit));
    }

    #[test]
    fn score_matches_raw_residual_formula() {
        let data = planted(30, &[4, 9], 7.0, 2);
        let sol = SparsitySolution::from_outliers(&data, 3, vec![4, 9, 20]).unwrap();
        let r = residuals(&data, &sol.beta).unwrap();
        let rss: f64 = r.iter().zip(&sol.alpha).map(|(ri, ai)| (ri - ai).powi(2)).sum();
        let expected = 30.0 * (rss / 30.0).ln() + 3.0 * 30f64.ln();
        assert!((bic_score(&data, &sol).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn planted_budget_is_selected() {
        let out = [3, 20, 41, 62, 83];
        let data = planted(100, &out, 12.0, 5);
        let sel = fit_l0_auto(&data, &L0AutoOptions::new(10)).unwrap();
        assert_eq!(sel.k, 5);
        assert_eq!(sel.solution.outliers, out.to_vec());
        assert_eq!(sel.trace.len(), 10);
        assert!(sel.ols_bic.is_some());
    }

    #[test]
    fn single_budget_returns_that_fit() {
        let data = planted(20, &[1], 9.0, 8);
        let beta0 = CoefVector::zeros(2);
        let sel = select_k_bic(&data, &beta0, 1, 1).unwrap();
        assert_eq!(sel.k, 1);
        assert_eq!(sel.solution, fit_lcs(&data, 1, &beta0, 1).unwrap());
    }

    #[test]
    fn ties_go_to_smaller_budget() {
        let trace = [Some(1.0), Some(0.5), Some(0.5)];
        let mut best = 0;
        for (i, b) in trace.iter().enumerate() {
            if rank(*b) < rank(trace[best]) {
                best = i;
            }
        }
        assert_eq!(best, 1);
        assert!(rank(None) < rank(Some(-1e300)));
    }
}
