use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("restricted design is numerically rank deficient")]
    RankDeficient,
    #[error("need at least {needed} rows for the fit, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("N - k = {inliers} inliers cannot identify {width} coefficients")]
    TooFewInliers { inliers: usize, width: usize },
    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("residual sum of squares is zero; the information criterion is undefined")]
    DegenerateFit,
    #[error("relative optimality gap undefined for dual bound {dual}")]
    DivisionDomain { dual: f64 },
    #[error("exact search limited to N <= {limit}, got N = {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("no grid point produced a converged fit")]
    AllFitsFailed,
    #[error("rolling window of {window} rows leaves no forecast targets in {rows} rows")]
    WindowTooLarge { window: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
