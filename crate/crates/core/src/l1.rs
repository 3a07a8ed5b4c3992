//! L1-penalized outlier effects: `min 0.5 ||Y - X beta - alpha||^2 + psi ||alpha||_1`.
//!
//! For fixed `beta` the optimal `alpha` is the soft-thresholded residual, and
//! profiling it out leaves the Huber loss with threshold `psi`. The solver
//! alternates the two blocks; once the set of clipped rows and their signs
//! stop changing it also tries the exact minimizer for that sign pattern,
//! keeping it only when the objective does not go up.

use serde::{Deserialize, Serialize};

use crate::classic::{self, huber_objective};
use crate::error::{Error, Result};
use crate::gram::Gram;
use crate::linalg::{self, residuals, solve_weighted_least_squares, CoefVector, Dataset};
use crate::par;

pub const MAX_ITER: usize = 200;
pub const BETA_TOL: f64 = 1e-8;
/// Consistency factor turning a median absolute deviation into a normal scale.
pub const MAD_SCALE: f64 = 1.4826;
pub const DEFAULT_GRID_POINTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Solution {
    pub beta: CoefVector,
    pub alpha: Vec<f64>,
    pub psi: f64,
    /// Penalized objective `0.5 ||Y - X beta - alpha||^2 + psi ||alpha||_1`.
    pub objective: f64,
    /// Number of nonzero outlier effects.
    pub n_outliers: usize,
    pub iterations: usize,
}

impl L1Solution {
    /// 0-based rows with a nonzero outlier effect.
    pub fn outliers(&self) -> Vec<usize> {
        self.alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, _)| i).collect()
    }
}

/// Closed-form minimizer of the penalized objective in `alpha` for fixed residuals.
pub fn soft_threshold_alpha(r: &[f64], psi: f64) -> Vec<f64> {
    r.iter()
        .map(|&ri| {
            if ri >= psi {
                ri - psi
            } else if ri <= -psi {
                ri + psi
            } else {
                0.0
            }
        })
        .collect()
}

/// Penalized objective evaluated from residuals and effects.
pub fn penalized_objective(r: &[f64], alpha: &[f64], psi: f64) -> f64 {
    let fit: f64 = r.iter().zip(alpha).map(|(ri, ai)| (ri - ai) * (ri - ai)).sum();
    0.5 * fit + psi * alpha.iter().map(|a| a.abs()).sum::<f64>()
}

/// Fits the L1 estimator for one `psi`, starting from the LAD fit.
pub fn fit_l1(data: &Dataset, psi: f64) -> Result<L1Solution> {
    let beta0 = classic::fit_lad(data)?.beta;
    fit_l1_from(data, psi, beta0)
}

pub fn fit_l1_from(data: &Dataset, psi: f64, beta0: CoefVector) -> Result<L1Solution> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::InvalidInput(format!("psi must be positive, got {psi}")));
    }
    let mut beta = beta0;
    let mut r = residuals(data, &beta)?;
    let mut profile = huber_objective(&r, psi);
    let mut last_change = f64::INFINITY;
    let mut target = vec![0.0; data.n()];
    for iteration in 1..=MAX_ITER {
        let alpha = soft_threshold_alpha(&r, psi);
        for i in 0..data.n() {
            target[i] = data.y()[i] - alpha[i];
        }
        let mut next = solve_weighted_least_squares(data, &target, None)?;
        let mut next_r = residuals(data, &next)?;
        let mut next_profile = huber_objective(&next_r, psi);
        if let Some(jump) = sign_pattern_minimizer(data, &next_r, &next, psi) {
            let jump_r = residuals(data, &jump)?;
            let jump_profile = huber_objective(&jump_r, psi);
            if jump_profile <= next_profile {
                (next, next_r, next_profile) = (jump, jump_r, jump_profile);
            }
        }
        debug_assert!(
            next_profile <= profile + 1e-12 * (1.0 + profile),
            "L1 objective increased: {profile} -> {next_profile}"
        );
        last_change = next.max_abs_diff(&beta);
        beta = next;
        r = next_r;
        profile = next_profile;
        if last_change < BETA_TOL {
            return Ok(finish(beta, &r, psi, iteration));
        }
    }
    Err(Error::NotConverged { iterations: MAX_ITER, last_change })
}

/// Exact minimizer of the penalized objective with the rows currently
/// clipped (|r_i| >= psi) held at their signs.
fn sign_pattern_minimizer(data: &Dataset, r: &[f64], beta: &CoefVector, psi: f64) -> Option<CoefVector> {
    let mut gram = Gram::new(data.width());
    for (i, &ri) in r.iter().enumerate() {
        if ri.abs() < psi {
            gram.add(data.design_row(i), ri);
        } else {
            gram.add_linear(data.design_row(i), psi * ri.signum());
        }
    }
    let delta = gram.solve()?;
    Some(beta.iter().zip(&delta).map(|(b, d)| b + d).collect::<Vec<_>>().into())
}

fn finish(beta: CoefVector, r: &[f64], psi: f64, iterations: usize) -> L1Solution {
    let alpha = soft_threshold_alpha(r, psi);
    let objective = penalized_objective(r, &alpha, psi);
    debug_assert!(
        (objective - huber_objective(r, psi)).abs() <= 1e-8 * (1.0 + objective),
        "penalized and profile objectives disagree"
    );
    let n_outliers = alpha.iter().filter(|a| **a != 0.0).count();
    L1Solution { beta, alpha, psi, objective, n_outliers, iterations }
}

/// Information criterion of an L1 fit, using the number of nonzero effects
/// as the complexity term. A zero residual sum maps to `-inf`.
pub fn l1_bic(data: &Dataset, sol: &L1Solution) -> f64 {
    let r = residuals(data, &sol.beta).expect("solution matches data");
    let rss: f64 = r.iter().zip(&sol.alpha).map(|(ri, ai)| (ri - ai) * (ri - ai)).sum();
    let n = data.n() as f64;
    if crate::l0::degenerate_rss(rss, data.y()) {
        return f64::NEG_INFINITY;
    }
    n * (rss / n).ln() + sol.n_outliers as f64 * n.ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiTraceEntry {
    pub psi: f64,
    /// `None` when the fit at this grid point failed.
    pub bic: Option<f64>,
    pub n_outliers: Option<usize>,
    /// Flags at most half the rows; only such fits can be selected.
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiSelection {
    pub solution: L1Solution,
    pub trace: Vec<PsiTraceEntry>,
}

/// Scale of the LAD residuals, `1.4826 * MAD`, used to anchor the psi grid.
pub fn lad_residual_scale(data: &Dataset) -> Result<f64> {
    let lad = classic::fit_lad(data)?;
    Ok(robust_scale(&residuals(data, &lad.beta)?))
}

fn robust_scale(r: &[f64]) -> f64 {
    let med = linalg::median(r);
    let dev: Vec<f64> = r.iter().map(|v| (v - med).abs()).collect();
    let s = MAD_SCALE * linalg::median(&dev);
    if s > 0.0 {
        return s;
    }
    // more than half the residuals vanish; fall back to the mean deviation
    let mean_abs = dev.iter().sum::<f64>() / dev.len() as f64;
    if mean_abs > 0.0 {
        mean_abs
    } else {
        1.0
    }
}

/// Log-spaced grid of `points` values from `0.1 s` to `10 s`.
pub fn psi_grid(scale: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = ((0.1 * scale).ln(), (10.0 * scale).ln());
    match points {
        0 => vec![],
        1 => vec![scale],
        _ => (0..points).map(|j| (lo + (hi - lo) * j as f64 / (points - 1) as f64).exp()).collect(),
    }
}

pub fn default_psi_grid(data: &Dataset) -> Result<Vec<f64>> {
    Ok(psi_grid(lad_residual_scale(data)?, DEFAULT_GRID_POINTS))
}

/// Fits every grid value and keeps the one with the smallest criterion;
/// ties go to the larger `psi`. Grid points whose fit fails are recorded in
/// the trace and skipped.
///
/// Fits flagging more than `N / 2` rows are scored but never selected: each
/// absorbed row leaves a residual of exactly `psi`, so the criterion tends to
/// `-inf` as `psi` shrinks and would otherwise always pick the grid floor.
pub fn select_psi_bic(data: &Dataset, grid: &[f64]) -> Result<PsiSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("psi grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidInput(format!("psi grid contains {bad}")));
    }
    let beta0 = classic::fit_lad(data)?.beta;
    let fits = par::map_indexed(grid.len(), |j| fit_l1_from(data, grid[j], beta0.clone()));
    let mut trace = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, L1Solution)> = None;
    for (psi, fit) in grid.iter().zip(fits) {
        match fit {
            Ok(sol) => {
                let bic = l1_bic(data, &sol);
                let admissible = sol.n_outliers <= data.n() / 2;
                trace.push(PsiTraceEntry { psi: *psi, bic: Some(bic), n_outliers: Some(sol.n_outliers), admissible });
                let replace = admissible
                    && match &best {
                    None => true,
                    Some((b, cur)) => bic < *b || (bic == *b && sol.psi > cur.psi),
                };
                if replace {
                    best = Some((bic, sol));
                }
            }
            Err(_) => trace.push(PsiTraceEntry { psi: *psi, bic: None, n_outliers: None, admissible: false }),
        }
    }
    best.map(|(_, solution)| PsiSelection { solution, trace }).ok_or(Error::AllFitsFailed)
}
