//! Robust linear regression with outlier fixed effects.
//!
//! The model is `y = X beta + alpha + u`, where a nonzero `alpha_i` marks row
//! `i` as an outlier. Two families of estimators are provided:
//!
//! * [`l0`]: at most `k` nonzero effects. Hard thresholding, local
//!   combinatorial search, neighborhood search over `k`, and selection of
//!   `k` by information criterion.
//! * [`l1`]: an L1 penalty `psi ||alpha||_1`, equivalent to Huber regression,
//!   with `psi` chosen by information criterion.
//!
//! [`classic`] holds the OLS, LAD and Huber comparators, [`oracle`] an exact
//! solver for small samples, [`dgp`] and [`montecarlo`] the simulation
//! study, and [`forecast`] a rolling-window backtest.
//!
//! With the default `parallel` feature, candidate scoring, grid fits,
//! replications and forecast windows run on the rayon pool. Results do not
//! depend on the number of threads.

pub mod classic;
pub mod dgp;
pub mod error;
pub mod forecast;
mod gram;
pub mod l0;
pub mod l1;
pub mod linalg;
pub mod methods;
pub mod montecarlo;
pub mod oracle;
pub mod par;

pub use error::{Error, Result};
pub use linalg::{CoefVector, Dataset};

/// Library version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
