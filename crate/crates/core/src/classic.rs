//! OLS, LAD and fixed-threshold Huber regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::Gram;
use crate::linalg::{self, residuals, solve_least_squares, solve_weighted_least_squares, CoefVector, Dataset};

/// Iteration budget shared by the iterative baselines.
pub const MAX_ITER: usize = 200;
/// Convergence threshold on the max-norm change of the coefficients.
pub const BETA_TOL: f64 = 1e-8;
/// Residual floor in the LAD reweighting `w_i = 1 / max(|r_i|, floor)`.
pub const LAD_RESIDUAL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicFit {
    pub beta: CoefVector,
    /// Loss at the returned coefficients.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Ordinary least squares; the objective is `0.5 * ||Y - X beta||^2`.
pub fn fit_ols(data: &Dataset) -> Result<ClassicFit> {
    let all: Vec<usize> = (0..data.n()).collect();
    let beta = solve_least_squares(data, &all)?;
    let objective = 0.5 * linalg::rss_on(data, &beta, &all);
    Ok(ClassicFit { beta, objective, iterations: 1, converged: true })
}

pub fn lad_objective(r: &[f64]) -> f64 {
    r.iter().map(|v| v.abs()).sum()
}

/// Huber loss `rho_psi(t)`: quadratic inside `[-psi, psi]`, linear outside.
#[inline]
pub fn huber_loss(t: f64, psi: f64) -> f64 {
    let a = t.abs();
    if a <= psi {
        0.5 * t * t
    } else {
        psi * a - 0.5 * psi * psi
    }
}

pub fn huber_objective(r: &[f64], psi: f64) -> f64 {
    r.iter().map(|&t| huber_loss(t, psi)).sum()
}

/// Least absolute deviations by iteratively reweighted least squares.
///
/// A step is accepted only if it does not increase `sum |r_i|`; when the
/// reweighted solve stalls at the residual floor the iteration stops. The
/// result is then polished by interpolating the `width` rows closest to the
/// fit, since LAD optima sit at such vertices.
///
/// Non-convergence is not an error: the fit comes back with
/// `converged == false`.
pub fn fit_lad(data: &Dataset) -> Result<ClassicFit> {
    fit_lad_with(data, MAX_ITER)
}

pub fn fit_lad_with(data: &Dataset, max_iter: usize) -> Result<ClassicFit> {
    let p = data.width();
    if data.n() < p {
        return Err(Error::TooFewRows { needed: p, got: data.n() });
    }
    let mut beta = fit_ols(data)?.beta;
    let mut r = residuals(data, &beta)?;
    let mut objective = lad_objective(&r);
    let mut converged = false;
    let mut iterations = 0;
    let mut weights = vec![0.0; data.n()];
    while iterations < max_iter {
        iterations += 1;
        for (w, ri) in weights.iter_mut().zip(&r) {
            *w = 1.0 / ri.abs().max(LAD_RESIDUAL_FLOOR);
        }
        let candidate = match solve_weighted_least_squares(data, data.y(), Some(&weights)) {
            Ok(b) => b,
            // weights spanning too many orders of magnitude; stop where we are
            Err(Error::RankDeficient) => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let cand_r = residuals(data, &candidate)?;
        let cand_obj = lad_objective(&cand_r);
        if cand_obj > objective {
            // the smoothed majorizer no longer decreases the true loss
            converged = true;
            break;
        }
        let change = candidate.max_abs_diff(&beta);
        beta = candidate;
        r = cand_r;
        objective = cand_obj;
        if change < BETA_TOL {
            converged = true;
            break;
        }
    }
    if let Some((b, obj)) = lad_vertex_polish(data, &r, objective) {
        beta = b;
        objective = obj;
    }
    Ok(ClassicFit { beta, objective, iterations, converged })
}

fn lad_vertex_polish(data: &Dataset, r: &[f64], objective: f64) -> Option<(CoefVector, f64)> {
    let p = data.width();
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let vertex = &order[..p];
    let beta = solve_least_squares(data, vertex).ok()?;
    let obj = lad_objective(&residuals(data, &beta).ok()?);
    (obj <= objective).then_some((beta, obj))
}

/// Huber regression with threshold `psi`.
///
/// Newton steps on the piecewise-quadratic loss: the quadratic rows form the
/// Hessian and the clipped rows contribute `psi * sign(r_i)` to the gradient.
/// When too few rows are quadratic to pin down a Newton step the iteration
/// falls back to the Huber-weighted least-squares step, which never increases
/// the loss. Steps are halved until the loss does not increase.
pub fn fit_huber(data: &Dataset, psi: f64) -> Result<ClassicFit> {
    fit_huber_from(data, psi, fit_ols(data)?.beta, MAX_ITER)
}

pub fn fit_huber_from(data: &Dataset, psi: f64, beta0: CoefVector, max_iter: usize) -> Result<ClassicFit> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::InvalidInput(format!("Huber threshold must be positive, got {psi}")));
    }
    let mut beta = beta0;
    let mut r = residuals(data, &beta)?;
    let mut objective = huber_objective(&r, psi);
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let step = newton_step(data, &r, psi).or_else(|| irls_step(data, &r, &beta, psi));
        let Some(step) = step else {
            return Ok(ClassicFit { beta, objective, iterations: iteration, converged: true });
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: CoefVector = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect::<Vec<_>>().into();
            let cand_r = residuals(data, &cand)?;
            let cand_obj = huber_objective(&cand_r, psi);
            if cand_obj <= objective {
                accepted = Some((cand, cand_r, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_r, cand_obj)) = accepted else {
            // no descent along the step: stationary up to rounding
            return Ok(ClassicFit { beta, objective, iterations: iteration, converged: true });
        };
        debug_assert!(cand_obj <= objective + 1e-12);
        last_change = cand.max_abs_diff(&beta);
        beta = cand;
        r = cand_r;
        objective = cand_obj;
        if last_change < BETA_TOL {
            return Ok(ClassicFit { beta, objective, iterations: iteration, converged: true });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, last_change })
}

fn newton_step(data: &Dataset, r: &[f64], psi: f64) -> Option<Vec<f64>> {
    let mut gram = Gram::new(data.width());
    for (i, &ri) in r.iter().enumerate() {
        if ri.abs() <= psi {
            gram.add(data.design_row(i), ri);
        } else {
            gram.add_linear(data.design_row(i), psi * ri.signum());
        }
    }
    gram.solve()
}

fn irls_step(data: &Dataset, r: &[f64], beta: &CoefVector, psi: f64) -> Option<Vec<f64>> {
    let w: Vec<f64> = r.iter().map(|ri| if ri.abs() <= psi { 1.0 } else { psi / ri.abs() }).collect();
    let target = solve_weighted_least_squares(data, data.y(), Some(&w)).ok()?;
    Some(target.iter().zip(beta.iter()).map(|(a, b)| a - b).collect())
}
