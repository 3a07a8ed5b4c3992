//! Replicated estimation experiments.
//!
//! Each replication draws a sample, fits every estimator, and records the
//! error of the first slope, the out-of-sample squared prediction error and,
//! for cardinality-constrained fits at the true budget, agreement with the
//! exact solution. Summaries are reduced in replication order.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classic::{fit_huber, fit_lad, fit_ols};
use crate::dgp::{generate, Dgp, DgpConfig, DgpSample};
use crate::error::{Error, Result};
use crate::l0::{fit_iht, fit_l0_auto, fit_lcs_detailed, L0AutoOptions, SparsitySolution, IHT_MAX_ITER};
use crate::l1::{default_psi_grid, select_psi_bic};
use crate::linalg::{CoefVector, Dataset};
use crate::oracle::{best_subset_exact, compare_solutions, OracleOptions, OracleResult, GAP_EPSILON};
use crate::par;

/// Index of the reported coefficient (first slope).
pub const REPORTED_COEFFICIENT: usize = 1;
/// Failure share above which a summary is flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.05;

pub struct FitContext<'a> {
    pub sample: &'a DgpSample,
    /// True outlier budget `floor(p N)`.
    pub k0: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorFit {
    pub beta: CoefVector,
    /// Present for cardinality-constrained estimators.
    pub sparse: Option<SparsitySolution>,
    /// For local search: whether the result was certified swap-inescapable.
    pub certified: Option<bool>,
}

impl EstimatorFit {
    pub fn dense(beta: CoefVector) -> Self {
        Self { beta, sparse: None, certified: None }
    }
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, ctx: &FitContext<'_>) -> Result<EstimatorFit>;
}

fn default_huber_psi() -> f64 {
    1.345
}

fn default_l() -> usize {
    2
}

/// Built-in estimators, configurable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Ols,
    Lad,
    Huber {
        #[serde(default = "default_huber_psi")]
        psi: f64,
    },
    /// L1-penalized effects with psi chosen by information criterion.
    L1,
    /// Budget chosen by information criterion over `1..=max_k` (default
    /// `2 k0`), then order-2 local search at the chosen budget.
    L0 {
        #[serde(default)]
        max_k: Option<usize>,
    },
    /// Hard thresholding from LAD at budget `k` (default `k0`).
    Iht {
        #[serde(default)]
        k: Option<usize>,
    },
    /// Local combinatorial search from LAD at budget `k` (default `k0`).
    Lcs {
        #[serde(default)]
        k: Option<usize>,
        #[serde(default = "default_l")]
        l: usize,
    },
    /// Returns the true coefficients; a harness check.
    TrueBeta,
}

impl EstimatorSpec {
    /// The four estimators compared in the bias tables.
    pub fn comparison_set() -> Vec<EstimatorSpec> {
        vec![EstimatorSpec::L0 { max_k: None }, EstimatorSpec::L1, EstimatorSpec::Lad, EstimatorSpec::Ols]
    }

    /// Heuristics compared against the exact solution at the true budget.
    pub fn heuristic_set() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::Iht { k: None },
            EstimatorSpec::Lcs { k: None, l: 1 },
            EstimatorSpec::Lcs { k: None, l: 2 },
        ]
    }
}

impl Estimator for EstimatorSpec {
    fn name(&self) -> String {
        match self {
            EstimatorSpec::Ols => "OLS".into(),
            EstimatorSpec::Lad => "LAD".into(),
            EstimatorSpec::Huber { .. } => "Huber".into(),
            EstimatorSpec::L1 => "L1".into(),
            EstimatorSpec::L0 { .. } => "L0".into(),
            EstimatorSpec::Iht { .. } => "IHT".into(),
            EstimatorSpec::Lcs { l, .. } => format!("LCS-{l}"),
            EstimatorSpec::TrueBeta => "TRUE".into(),
        }
    }

    fn fit(&self, ctx: &FitContext<'_>) -> Result<EstimatorFit> {
        let data = &ctx.sample.train;
        match self {
            EstimatorSpec::Ols => Ok(EstimatorFit::dense(fit_ols(data)?.beta)),
            EstimatorSpec::Lad => Ok(EstimatorFit::dense(fit_lad(data)?.beta)),
            EstimatorSpec::Huber { psi } => Ok(EstimatorFit::dense(fit_huber(data, *psi)?.beta)),
            EstimatorSpec::L1 => {
                let sel = select_psi_bic(data, &default_psi_grid(data)?)?;
                Ok(EstimatorFit::dense(sel.solution.beta))
            }
            EstimatorSpec::L0 { max_k } => {
                let max_k = max_k.unwrap_or(2 * ctx.k0).clamp(1, data.n() / 2);
                let sel = fit_l0_auto(data, &L0AutoOptions::new(max_k))?;
                Ok(EstimatorFit { beta: sel.solution.beta.clone(), sparse: Some(sel.solution), certified: None })
            }
            EstimatorSpec::Iht { k } => {
                let beta0 = fit_lad(data)?.beta;
                let sol = fit_iht(data, k.unwrap_or(ctx.k0), &beta0, IHT_MAX_ITER)?;
                Ok(EstimatorFit { beta: sol.beta.clone(), sparse: Some(sol), certified: None })
            }
            EstimatorSpec::Lcs { k, l } => {
                let beta0 = fit_lad(data)?.beta;
                let out = fit_lcs_detailed(data, k.unwrap_or(ctx.k0), &beta0, *l)?;
                Ok(EstimatorFit {
                    beta: out.solution.beta.clone(),
                    sparse: Some(out.solution),
                    certified: Some(out.inescapable),
                })
            }
            EstimatorSpec::TrueBeta => Ok(EstimatorFit::dense(ctx.sample.true_beta.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub replications: usize,
    /// Solve each replication exactly at the true budget and compare.
    #[serde(default)]
    pub oracle: Option<OracleOptions>,
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub estimator: String,
    /// Estimate minus truth for the first slope.
    pub beta1_err: Option<f64>,
    pub pred_err: Option<f64>,
    pub equal_oracle: Option<bool>,
    pub gap: Option<f64>,
    pub cpu_s: f64,
    /// Local-search certificate; `false` marks a violated invariant.
    pub certified: Option<bool>,
    pub error: Option<String>,
}

/// Aggregates for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub dgp: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub param: String,
    pub estimator: String,
    pub bias: f64,
    pub rmse: f64,
    pub pred_err: f64,
    pub equal_oracle: Option<f64>,
    pub gap: Option<f64>,
    pub cpu_s: f64,
    pub replications: usize,
    pub failures: usize,
    /// More than 5% of replications failed.
    pub failure_flag: bool,
    /// Local-search fits that did not certify their result.
    pub uncertified: usize,
}

/// The tabular summary schema, one row per estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow<'a> {
    pub dgp: u8,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub param: &'a str,
    pub estimator: &'a str,
    pub bias: f64,
    pub rmse: f64,
    pub pred_err: f64,
    pub equal_oracle: Option<f64>,
    pub gap: Option<f64>,
    pub cpu_s: f64,
}

impl MetricsSummary {
    pub fn row(&self) -> SummaryRow<'_> {
        SummaryRow {
            dgp: self.dgp,
            n: self.n,
            p: self.p,
            param: &self.param,
            estimator: &self.estimator,
            bias: self.bias,
            rmse: self.rmse,
            pred_err: self.pred_err,
            equal_oracle: self.equal_oracle,
            gap: self.gap,
            cpu_s: self.cpu_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub replication: usize,
    pub primal: f64,
    pub dual: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub summaries: Vec<MetricsSummary>,
    pub records: Vec<ReplicationRecord>,
    pub oracle: Vec<OracleRecord>,
}

/// Label of the design parameter varied across table rows.
pub fn param_label(cfg: &DgpConfig) -> String {
    match cfg.dgp {
        Dgp::Exogenous => format!("({},{})", cfg.mu_alpha, cfg.sigma_alpha),
        _ => format!("{}", cfg.rho),
    }
}

/// Mean squared error of `beta` on `test`.
pub fn prediction_error(test: &Dataset, beta: &[f64]) -> f64 {
    let n = test.n();
    (0..n).map(|i| (test.y()[i] - test.predict_row(i, beta)).powi(2)).sum::<f64>() / n as f64
}

fn run_one(
    cfg: &DgpConfig,
    estimators: &[&dyn Estimator],
    oracle: Option<&OracleOptions>,
    r: usize,
) -> (Vec<ReplicationRecord>, Option<OracleRecord>) {
    let failed = |name: String, e: &Error| ReplicationRecord {
        replication: r,
        estimator: name,
        beta1_err: None,
        pred_err: None,
        equal_oracle: None,
        gap: None,
        cpu_s: 0.0,
        certified: None,
        error: Some(e.to_string()),
    };
    let sample = match generate(cfg, r as u64) {
        Ok(s) => s,
        Err(e) => return (estimators.iter().map(|est| failed(est.name(), &e)).collect(), None),
    };
    let k0 = cfg.k0();
    let ctx = FitContext { sample: &sample, k0 };
    let exact: Option<OracleResult> = oracle.and_then(|opts| match best_subset_exact(&sample.train, k0, None, opts) {
        Ok(res) => Some(res),
        Err(e) => {
            log::warn!("replication {r}: exact solve failed: {e}");
            None
        }
    });
    let records = estimators
        .iter()
        .map(|est| {
            let start = Instant::now();
            let fit = est.fit(&ctx);
            let cpu_s = start.elapsed().as_secs_f64();
            match fit {
                Ok(fit) => {
                    let truth = sample.true_beta[REPORTED_COEFFICIENT];
                    let at_k0 = fit.sparse.as_ref().filter(|s| s.k == k0);
                    let (equal_oracle, gap) = match (at_k0, &exact) {
                        (Some(s), Some(ex)) => (
                            Some(compare_solutions(s, &ex.solution).equal()),
                            Some((s.objective - ex.dual) / ex.dual.max(GAP_EPSILON)),
                        ),
                        _ => (None, None),
                    };
                    ReplicationRecord {
                        replication: r,
                        estimator: est.name(),
                        beta1_err: Some(fit.beta[REPORTED_COEFFICIENT] - truth),
                        pred_err: Some(prediction_error(&sample.test, &fit.beta)),
                        equal_oracle,
                        gap,
                        cpu_s,
                        certified: fit.certified,
                        error: None,
                    }
                }
                Err(e) => ReplicationRecord { cpu_s, ..failed(est.name(), &e) },
            }
        })
        .collect();
    let oracle_record = exact.map(|ex| OracleRecord {
        replication: r,
        primal: ex.primal,
        dual: ex.dual,
        proven_optimal: ex.proven_optimal,
        nodes_explored: ex.nodes_explored,
        wall_s: ex.wall_time.as_secs_f64(),
    });
    (records, oracle_record)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for x in v {
        sum += x;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Reduces one estimator's records, in replication order.
pub fn summarize(cfg: &DgpConfig, estimator: &str, records: &[ReplicationRecord]) -> MetricsSummary {
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == estimator && r.error.is_none()).collect();
    let total = records.iter().filter(|r| r.estimator == estimator).count();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.beta1_err).collect();
    let bias = mean(errs.iter().copied()).unwrap_or(f64::NAN);
    // bias^2 + variance, so rmse >= |bias| holds in floating point too
    let var = mean(errs.iter().map(|e| (e - bias).powi(2))).unwrap_or(f64::NAN);
    let failures = total - ok.len();
    MetricsSummary {
        dgp: cfg.dgp.into(),
        n: cfg.n,
        p: cfg.p,
        param: param_label(cfg),
        estimator: estimator.to_string(),
        bias,
        rmse: (bias * bias + var).sqrt(),
        pred_err: mean(ok.iter().filter_map(|r| r.pred_err)).unwrap_or(f64::NAN),
        equal_oracle: mean(ok.iter().filter_map(|r| r.equal_oracle.map(|e| if e { 1.0 } else { 0.0 }))),
        gap: mean(ok.iter().filter_map(|r| r.gap)),
        cpu_s: mean(records.iter().filter(|r| r.estimator == estimator).map(|r| r.cpu_s)).unwrap_or(0.0),
        replications: total,
        failures,
        failure_flag: total > 0 && failures as f64 > FAILURE_FLAG_SHARE * total as f64,
        uncertified: ok.iter().filter(|r| r.certified == Some(false)).count(),
    }
}

/// Runs `options.replications` replications of `cfg` with every estimator.
pub fn run_monte_carlo(cfg: &DgpConfig, estimators: &[&dyn Estimator], options: &MonteCarloOptions) -> Result<MonteCarloReport> {
    cfg.validate()?;
    if options.replications == 0 {
        return Err(Error::InvalidInput("replications: must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidInput("estimators: list is empty".into()));
    }
    let names: Vec<String> = estimators.iter().map(|e| e.name()).collect();
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::InvalidInput(format!("estimators: duplicate name {name}")));
        }
    }
    let per_rep = par::map_indexed(options.replications, |r| run_one(cfg, estimators, options.oracle.as_ref(), r));
    let mut records = Vec::new();
    let mut oracle = Vec::new();
    for (recs, orc) in per_rep {
        records.extend(recs);
        oracle.extend(orc);
    }
    let summaries = names.iter().map(|name| summarize(cfg, name, &records)).collect();
    let summaries: Vec<MetricsSummary> = summaries;
    for s in &summaries {
        if s.failure_flag {
            log::warn!("{}: {} of {} replications failed", s.estimator, s.failures, s.replications);
        }
    }
    Ok(MonteCarloReport { summaries, records, oracle })
}
