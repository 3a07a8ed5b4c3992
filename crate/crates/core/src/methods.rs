//! One entry point over every estimator, as used by the command line and
//! the rolling forecast.

use serde::{Deserialize, Serialize};

use crate::classic::{fit_huber, fit_lad, fit_ols};
use crate::error::{Error, Result};
use crate::l0::{fit_l0_auto, fit_lcs, BicEntry, L0AutoOptions};
use crate::l1::{default_psi_grid, fit_l1, select_psi_bic, PsiTraceEntry};
use crate::linalg::{residuals, CoefVector, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FitMethod {
    Ols,
    Lad,
    Huber {
        psi: f64,
    },
    /// `psi: None` selects psi by information criterion.
    L1 {
        psi: Option<f64>,
    },
    /// `k: None` selects the budget by information criterion over
    /// `1..=max_k`; `l` is the exchange order of the final search.
    L0 {
        k: Option<usize>,
        max_k: usize,
        l: usize,
    },
}

impl FitMethod {
    /// Default largest budget scanned when none is given: a tenth of the
    /// rows, at least one.
    pub fn default_max_k(n: usize) -> usize {
        (n / 10).clamp(1, (n / 2).max(1))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodFit {
    pub beta: CoefVector,
    /// Sorted 0-based rows given an outlier effect: the trimmed rows for
    /// L0, the rows with a nonzero effect for L1, empty otherwise.
    pub outliers: Vec<usize>,
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub k: Option<usize>,
    pub psi: Option<f64>,
    pub k_trace: Option<Vec<BicEntry>>,
    pub psi_trace: Option<Vec<PsiTraceEntry>>,
    pub ols_bic: Option<f64>,
}

impl MethodFit {
    fn dense(beta: CoefVector, objective: f64, n: usize) -> Self {
        Self {
            beta,
            outliers: vec![],
            alpha: vec![0.0; n],
            objective,
            k: None,
            psi: None,
            k_trace: None,
            psi_trace: None,
            ols_bic: None,
        }
    }
}

pub fn fit_method(data: &Dataset, method: &FitMethod) -> Result<MethodFit> {
    let n = data.n();
    match method {
        FitMethod::Ols => {
            let f = fit_ols(data)?;
            Ok(MethodFit::dense(f.beta, f.objective, n))
        }
        FitMethod::Lad => {
            let f = fit_lad(data)?;
            Ok(MethodFit::dense(f.beta, f.objective, n))
        }
        FitMethod::Huber { psi } => {
            let f = fit_huber(data, *psi)?;
            Ok(MethodFit { psi: Some(*psi), ..MethodFit::dense(f.beta, f.objective, n) })
        }
        FitMethod::L1 { psi } => {
            let (sol, trace) = match psi {
                Some(psi) => (fit_l1(data, *psi)?, None),
                None => {
                    let sel = select_psi_bic(data, &default_psi_grid(data)?)?;
                    (sel.solution, Some(sel.trace))
                }
            };
            Ok(MethodFit {
                outliers: sol.outliers(),
                psi: Some(sol.psi),
                psi_trace: trace,
                ..MethodFit::dense(sol.beta, sol.objective, n)
            }
            .with_alpha(sol.alpha))
        }
        FitMethod::L0 { k, max_k, l } => {
            let (sol, trace, ols_bic) = match k {
                Some(k) => (fit_lcs(data, *k, &fit_lad(data)?.beta, *l)?, None, None),
                None => {
                    if *max_k == 0 || *max_k > n / 2 {
                        return Err(Error::InvalidInput(format!("max_k must lie in 1..={}, got {max_k}", n / 2)));
                    }
                    let opts = L0AutoOptions { max_k: *max_k, l_select: 1, l_final: *l };
                    let sel = fit_l0_auto(data, &opts)?;
                    (sel.solution, Some(sel.trace), sel.ols_bic)
                }
            };
            let outliers = sol.outliers.clone();
            Ok(MethodFit {
                outliers,
                k: Some(sol.k),
                k_trace: trace,
                ols_bic,
                ..MethodFit::dense(sol.beta, sol.objective, n)
            }
            .with_alpha(sol.alpha))
        }
    }
}

impl MethodFit {
    fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        self.alpha = alpha;
        self
    }

    /// `y - X beta - alpha`.
    pub fn adjusted_residuals(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut r = residuals(data, &self.beta)?;
        for (ri, ai) in r.iter_mut().zip(&self.alpha) {
            *ri -= ai;
        }
        Ok(r)
    }
}
