//! Cardinality-constrained outlier effects:
//! `min 0.5 ||Y - X beta - alpha||^2  s.t.  ||alpha||_0 <= k`.
//!
//! For a given outlier set the optimal effects absorb those residuals
//! exactly, so the problem is least trimmed squares over all inlier sets of
//! size at least `N - k`. The solvers here are heuristics for that
//! combinatorial search:
//!
//! * [`fit_iht`] alternates hard thresholding of residuals with least squares
//!   on the kept rows.
//! * [`local_swap_search`] tries every exchange of up to `l` rows between the
//!   inlier and outlier sets.
//! * [`fit_lcs`] repeats the two until no exchange helps.
//! * [`neighborhood_search`] runs the above for every budget `1..=K`,
//!   re-seeding each budget from its neighbors.
//! * [`select_k_bic`] picks the budget by an information criterion.

mod bic;
mod iht;
mod search;
mod swap;

pub use bic::{bic_score, fit_l0_auto, select_k_bic, BicEntry, KSelection, L0AutoOptions};
pub use iht::{fit_iht, hard_threshold, top_k_indices, IHT_BETA_TOL, IHT_MAX_ITER};
pub use search::{
    fit_lcs, fit_lcs_detailed, neighborhood_search, LcsOutcome, NeighborhoodOutcome, LCS_MAX_OUTER,
    NEIGHBORHOOD_MAX_SWEEPS,
};
pub(crate) use bic::degenerate_rss;
pub use swap::{local_swap_search, swap_candidate_count, SwapOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, residuals, solve_least_squares, CoefVector, Dataset};

/// A feasible point of the constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsitySolution {
    pub beta: CoefVector,
    /// Outlier effects; equal to the residual on outlier rows, zero elsewhere.
    pub alpha: Vec<f64>,
    /// Sparsity budget the solution was computed for.
    pub k: usize,
    /// Sorted 0-based inlier rows.
    pub inliers: Vec<usize>,
    /// Sorted 0-based outlier rows, at most `k` of them.
    pub outliers: Vec<usize>,
    /// `0.5 * sum over inliers of (y_i - x_i' beta)^2`.
    pub objective: f64,
}

impl SparsitySolution {
    /// Least squares on the complement of `outliers`, with the outlier
    /// residuals absorbed into `alpha`.
    pub fn from_outliers(data: &Dataset, k: usize, mut outliers: Vec<usize>) -> Result<Self> {
        outliers.sort_unstable();
        outliers.dedup();
        if outliers.len() > k {
            return Err(Error::InvalidInput(format!("{} outliers exceed budget {k}", outliers.len())));
        }
        if let Some(&last) = outliers.last() {
            if last >= data.n() {
                return Err(Error::InvalidInput(format!("outlier row {last} out of range")));
            }
        }
        let inliers = complement(data.n(), &outliers);
        if inliers.len() < data.width() {
            return Err(Error::TooFewInliers { inliers: inliers.len(), width: data.width() });
        }
        let beta = solve_least_squares(data, &inliers)?;
        Ok(Self::assemble(data, k, beta, inliers, outliers))
    }

    fn assemble(data: &Dataset, k: usize, beta: CoefVector, inliers: Vec<usize>, outliers: Vec<usize>) -> Self {
        let r = residuals(data, &beta).expect("beta matches design");
        let mut alpha = vec![0.0; data.n()];
        for &i in &outliers {
            alpha[i] = r[i];
        }
        let objective = 0.5 * inliers.iter().map(|&i| r[i] * r[i]).sum::<f64>();
        Self { beta, alpha, k, inliers, outliers, objective }
    }

    /// Residual sum of squares of `Y - X beta - alpha`, recomputed from the data.
    pub fn trimmed_rss(&self, data: &Dataset) -> f64 {
        linalg::rss_on(data, &self.beta, &self.inliers)
    }

    /// Outlier indicator per row.
    pub fn gamma(&self, n: usize) -> Vec<bool> {
        let mut g = vec![false; n];
        for &i in &self.outliers {
            g[i] = true;
        }
        g
    }
}

pub(crate) fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - sorted.len());
    let mut it = sorted.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Objective changes below this are treated as rounding noise: a residual
/// norm under `1e-12 * ||y||`.
pub(crate) fn noise_floor(data: &Dataset) -> f64 {
    1e-24 * data.y().iter().map(|v| v * v).sum::<f64>()
}

/// `new` is a strict improvement over `old` beyond relative and absolute noise.
pub(crate) fn improves(new: f64, old: f64, floor: f64) -> bool {
    if old == f64::INFINITY {
        return new < old;
    }
    new < old - swap::IMPROVEMENT_TOL * old.abs() - floor
}

pub(crate) fn check_budget(data: &Dataset, k: usize) -> Result<()> {
    if k > data.n() || data.n() - k < data.width() {
        return Err(Error::TooFewInliers { inliers: data.n().saturating_sub(k), width: data.width() });
    }
    Ok(())
}

/// Tuning constants of the combinatorial searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Local exactness level: at most `l` rows are exchanged per move.
    pub l: usize,
    /// Iteration cap for hard thresholding.
    pub max_iter: usize,
    /// Largest budget visited by the neighborhood search.
    pub max_k: usize,
    /// Inflation of the warm-start effects when bounding `|alpha|` in the
    /// exact search.
    pub tau: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { l: 1, max_iter: IHT_MAX_ITER, max_k: 1, tau: 1.5 }
    }
}

impl SearchBudget {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(1..=2).contains(&self.l) {
            return Err(Error::InvalidInput(format!("local exactness level must be 1 or 2, got {}", self.l)));
        }
        if self.max_k == 0 || self.max_k > n / 2 {
            return Err(Error::InvalidInput(format!(
                "maximum budget {} outside 1..={}",
                self.max_k,
                n / 2
            )));
        }
        if self.tau <= 1.0 {
            return Err(Error::InvalidInput(format!("tau must exceed 1, got {}", self.tau)));
        }
        Ok(())
    }
}
