//! Simulation designs for the Monte Carlo study.
//!
//! * DGP 1: exogenous outlier shifts `alpha_i ~ N(mu, sigma^2)` on the first
//!   `k0 = floor(pN)` rows.
//! * DGP 2: the shifts are `rho (v1 + v2 + v3)`, built from the innovations
//!   that drive the regressors.
//! * DGP 3: a predictive regression with a persistent VAR(1) innovation
//!   vector, a cointegrated pair, two random walks and two blocks of
//!   endogenous outliers.
//!
//! Every draw comes from a ChaCha stream selected by `(seed, replication)`,
//! so replications are independent of the order in which they run.

use nalgebra::{Cholesky, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CoefVector, Dataset};

pub const DEFAULT_TEST_ROWS: usize = 1000;
pub const DEFAULT_BURN_IN: usize = 200;
/// Diagonal of the default VAR coefficient matrix. Not taken from any data.
pub const DEFAULT_PHI_DIAGONAL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dgp {
    Exogenous,
    Endogenous,
    Predictive,
}

impl TryFrom<u8> for Dgp {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Dgp::Exogenous),
            2 => Ok(Dgp::Endogenous),
            3 => Ok(Dgp::Predictive),
            _ => Err(format!("dgp must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Dgp> for u8 {
    fn from(d: Dgp) -> u8 {
        match d {
            Dgp::Exogenous => 1,
            Dgp::Endogenous => 2,
            Dgp::Predictive => 3,
        }
    }
}

fn default_test_rows() -> usize {
    DEFAULT_TEST_ROWS
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub dgp: Dgp,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    #[serde(default)]
    pub mu_alpha: f64,
    #[serde(default)]
    pub sigma_alpha: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_rows")]
    pub n_test: usize,
    /// 6×6 VAR coefficient matrix for DGP 3, row-major. Defaults to `0.2 I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_phi: Option<Vec<Vec<f64>>>,
    /// 6×6 innovation covariance for DGP 3. Defaults to `I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_sigma: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl DgpConfig {
    pub fn new(dgp: Dgp, n: usize, p: f64) -> Self {
        Self {
            dgp,
            n,
            p,
            mu_alpha: 0.0,
            sigma_alpha: 0.0,
            rho: 0.0,
            seed: 0,
            n_test: DEFAULT_TEST_ROWS,
            var_phi: None,
            var_sigma: None,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// `floor(p N)`.
    pub fn k0(&self) -> usize {
        (self.p * self.n as f64).floor() as usize
    }

    /// Checks every field; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidInput(format!("{field}: {msg}")));
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p", format!("must lie in (0, 1), got {}", self.p));
        }
        if self.k0() < 1 {
            return bad("p", format!("floor(p * N) must be at least 1, got p = {}, N = {}", self.p, self.n));
        }
        let width = match self.dgp {
            Dgp::Predictive => 6,
            _ => 3,
        };
        if self.n < width + self.k0() + 1 {
            return bad("N", format!("{} rows leave too few inliers for {width} coefficients", self.n));
        }
        if self.n_test == 0 {
            return bad("n_test", "must be positive".into());
        }
        for (field, v) in [("mu_alpha", self.mu_alpha), ("sigma_alpha", self.sigma_alpha), ("rho", self.rho)] {
            if !v.is_finite() {
                return bad(field, format!("must be finite, got {v}"));
            }
        }
        if self.sigma_alpha < 0.0 {
            return bad("sigma_alpha", format!("must be non-negative, got {}", self.sigma_alpha));
        }
        if self.dgp == Dgp::Predictive {
            let phi = self.phi()?;
            let sigma = self.sigma()?;
            if phi.iter().any(|v| !v.is_finite()) {
                return bad("var_phi", "entries must be finite".into());
            }
            if (sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
                return bad("var_sigma", "must be symmetric".into());
            }
            if Cholesky::new(sigma).is_none() {
                return bad("var_sigma", "must be positive definite".into());
            }
        }
        Ok(())
    }

    fn matrix(field: &str, rows: &Option<Vec<Vec<f64>>>, default: Matrix6<f64>) -> Result<Matrix6<f64>> {
        let Some(rows) = rows else {
            return Ok(default);
        };
        if rows.len() != 6 || rows.iter().any(|r| r.len() != 6) {
            return Err(Error::InvalidInput(format!("{field}: must be a 6x6 matrix")));
        }
        Ok(Matrix6::from_fn(|i, j| rows[i][j]))
    }

    pub fn phi(&self) -> Result<Matrix6<f64>> {
        Self::matrix("var_phi", &self.var_phi, Matrix6::identity() * DEFAULT_PHI_DIAGONAL)
    }

    pub fn sigma(&self) -> Result<Matrix6<f64>> {
        Self::matrix("var_sigma", &self.var_sigma, Matrix6::identity())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSample {
    pub train: Dataset,
    /// Rows drawn from the same design without outliers.
    pub test: Dataset,
    pub true_beta: CoefVector,
    /// Sorted 0-based rows carrying a shift.
    pub true_outliers: Vec<usize>,
    /// Shift applied to every training row (zero off the outlier rows).
    pub true_alpha: Vec<f64>,
}

/// Generator for replication `replication` of `cfg`.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

pub fn generate(cfg: &DgpConfig, replication: u64) -> Result<DgpSample> {
    cfg.validate()?;
    let mut rng = replication_rng(cfg.seed, replication);
    match cfg.dgp {
        Dgp::Exogenous | Dgp::Endogenous => Ok(cross_section(cfg, &mut rng)),
        Dgp::Predictive => predictive(cfg, &mut rng),
    }
}

pub fn gen_dgp1(cfg: &DgpConfig) -> Result<DgpSample> {
    expect_kind(cfg, Dgp::Exogenous)?;
    generate(cfg, 0)
}

pub fn gen_dgp2(cfg: &DgpConfig) -> Result<DgpSample> {
    expect_kind(cfg, Dgp::Endogenous)?;
    generate(cfg, 0)
}

pub fn gen_dgp3(cfg: &DgpConfig) -> Result<DgpSample> {
    expect_kind(cfg, Dgp::Predictive)?;
    generate(cfg, 0)
}

fn expect_kind(cfg: &DgpConfig, kind: Dgp) -> Result<()> {
    if cfg.dgp != kind {
        return Err(Error::InvalidInput(format!("dgp: expected {}, got {}", u8::from(kind), u8::from(cfg.dgp))));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn cross_section(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> DgpSample {
    const BETA: [f64; 3] = [0.5, 1.0, 1.0];
    let k0 = cfg.k0();
    let draw = |rng: &mut ChaCha8Rng, rows: usize, contaminate: bool| {
        let mut x = Vec::with_capacity(2 * rows);
        let mut y = Vec::with_capacity(rows);
        let mut alpha = vec![0.0; rows];
        for (i, a) in alpha.iter_mut().enumerate() {
            let (v1, v2, v3) = (normal(rng), normal(rng), normal(rng));
            let u = normal(rng);
            let x1 = (v1 * v1 + v2 * v2 - 2.0) / 2.0;
            let x2 = x1 + v3;
            if contaminate && i < k0 {
                *a = match cfg.dgp {
                    Dgp::Endogenous => cfg.rho * (v1 + v2 + v3),
                    _ => cfg.mu_alpha + cfg.sigma_alpha * normal(rng),
                };
            }
            x.extend([x1, x2]);
            y.push(BETA[0] + BETA[1] * x1 + BETA[2] * x2 + *a + u);
        }
        (Dataset::from_row_major(y, x, 2, true).expect("finite draws"), alpha)
    };
    let (train, true_alpha) = draw(rng, cfg.n, true);
    let (test, _) = draw(rng, cfg.n_test, false);
    DgpSample { train, test, true_beta: CoefVector(BETA.to_vec()), true_outliers: (0..k0).collect(), true_alpha }
}

/// Largest eigenvalue modulus of `phi`.
pub fn spectral_radius(phi: &Matrix6<f64>) -> f64 {
    phi.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

struct Var1 {
    phi: Matrix6<f64>,
    chol: Matrix6<f64>,
    state: Vector6<f64>,
}

impl Var1 {
    fn new(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let phi = cfg.phi()?;
        let radius = spectral_radius(&phi);
        if radius >= 1.0 {
            log::warn!("VAR coefficient matrix is not stable (spectral radius {radius:.4}); proceeding");
        }
        let chol = Cholesky::new(cfg.sigma()?)
            .ok_or_else(|| Error::InvalidInput("var_sigma: must be positive definite".into()))?
            .l();
        let mut var = Self { phi, chol, state: Vector6::zeros() };
        for _ in 0..cfg.burn_in {
            var.step(rng);
        }
        Ok(var)
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> Vector6<f64> {
        let w = Vector6::from_fn(|_, _| normal(rng));
        self.state = self.phi * self.state + self.chol * w;
        self.state
    }
}

/// Rows `i = 1..=rows` of the predictive regression: regressors dated `i`,
/// response dated `i + 1`. Innovation layout is `(z, v1, v2, e1, e2, u)`.
fn predictive_rows(cfg: &DgpConfig, beta: &[f64], rows: usize, outliers: &[usize], rng: &mut ChaCha8Rng) -> Result<(Dataset, Vec<f64>)> {
    let mut var = Var1::new(cfg, rng)?;
    let mut xc = [0.0f64; 2];
    let mut rw = [0.0f64; 2];
    let mut xi = var.step(rng);
    let mut x = Vec::with_capacity(5 * rows);
    let mut y = Vec::with_capacity(rows);
    let mut alpha = vec![0.0; rows];
    for (i, a) in alpha.iter_mut().enumerate() {
        // cointegrated pair: x1 is a random walk and x2 tracks lagged x1,
        // so x1 - x2 is stationary
        let lagged = xc;
        xc = [lagged[0] + xi[1], lagged[0] + xi[2]];
        rw = [rw[0] + xi[3], rw[1] + xi[4]];
        let z = xi[0];
        if outliers.binary_search(&i).is_ok() {
            *a = cfg.rho * (z + xi[1] + xi[2]);
        }
        let next = var.step(rng);
        let row = [z, xc[0], xc[1], rw[0], rw[1]];
        let fit = beta[0] + row.iter().zip(&beta[1..]).map(|(r, b)| r * b).sum::<f64>();
        y.push(fit + *a + next[5]);
        x.extend(row);
        xi = next;
    }
    Ok((Dataset::from_row_major(y, x, 5, true)?, alpha))
}

fn predictive(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<DgpSample> {
    let n = cfg.n;
    let eta = 1.0 / (n as f64).sqrt();
    let beta = vec![0.3, 1.0, 1.0, -1.0, eta, -eta];
    let block = cfg.k0() / 2;
    let (c1, c2) = ((0.25 * n as f64).floor() as usize, (0.75 * n as f64).floor() as usize);
    // 1-based periods c + 1 ..= c + block are 0-based rows c .. c + block
    let mut outliers: Vec<usize> = (c1..c1 + block).chain(c2..c2 + block).filter(|&i| i < n).collect();
    outliers.dedup();
    let (train, true_alpha) = predictive_rows(cfg, &beta, n, &outliers, rng)?;
    let (test, _) = predictive_rows(cfg, &beta, cfg.n_test, &[], rng)?;
    Ok(DgpSample { train, test, true_beta: CoefVector(beta), true_outliers: outliers, true_alpha })
}
