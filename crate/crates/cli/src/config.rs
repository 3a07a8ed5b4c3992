//! Command-line arguments and the resolved run configuration.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use l0robust::dgp::DgpConfig;
use l0robust::methods::FitMethod;
use l0robust::montecarlo::EstimatorSpec;
use l0robust::oracle::OracleOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_HUBER_PSI: f64 = 1.345;
pub const DEFAULT_L: usize = 2;

#[derive(Parser, Debug)]
#[command(name = "l0robust", version, about = "Robust regression with sparse outlier effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one estimator to a CSV file
    Fit {
        /// CSV with a header; first column is the response
        input: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Trace the information criterion over k (l0) or psi (l1)
    Tune {
        input: PathBuf,
        #[arg(long, value_enum)]
        method: TuneMethod,
        /// Largest budget scanned (l0)
        #[arg(long)]
        max_k: Option<usize>,
        /// Exchange order of the local search (l0)
        #[arg(long)]
        l: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rolling-window one-step-ahead forecasts
    Forecast {
        /// Time-ordered CSV; each row pairs a target with its predictors
        input: PathBuf,
        /// Rows in each estimation window
        #[arg(long)]
        window: usize,
        /// Comma-separated 1-based target rows that start a new sub-period
        #[arg(long, value_delimiter = ',')]
        periods: Vec<usize>,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo study driven by a JSON config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug)]
pub struct MethodArgs {
    #[arg(long, value_enum)]
    pub method: MethodName,
    /// Outlier budget (l0)
    #[arg(long)]
    pub k: Option<usize>,
    /// Penalty (l1) or Huber threshold (huber)
    #[arg(long)]
    pub psi: Option<f64>,
    /// Select k (l0) or psi (l1) by information criterion
    #[arg(long)]
    pub auto: bool,
    /// Largest budget scanned with --auto (l0)
    #[arg(long)]
    pub max_k: Option<usize>,
    /// Exchange order of the local search, 1 or 2 (l0)
    #[arg(long)]
    pub l: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON report path; stdout when absent. CSV tables are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    L0,
    L1,
    Lad,
    Ols,
    Huber,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMethod {
    L0,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Fit,
    Simulate,
    Tune,
    Forecast,
}

/// Everything a run depends on, embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub method: Option<MethodName>,
    pub k: Option<usize>,
    pub psi: Option<f64>,
    pub auto: bool,
    pub max_k: Option<usize>,
    pub l: Option<usize>,
    pub window: Option<usize>,
    pub periods: Vec<usize>,
    pub seed: Option<u64>,
    pub threads: usize,
    /// The estimator actually run, with defaults filled in.
    pub resolved_method: Option<FitMethod>,
    pub simulation: Option<SimulationConfig>,
}

impl RunConfig {
    pub fn new(command: CommandName, common: &CommonArgs) -> Self {
        Self {
            command,
            input_path: None,
            output_path: common.out.clone(),
            config_path: None,
            method: None,
            k: None,
            psi: None,
            auto: false,
            max_k: None,
            l: None,
            window: None,
            periods: vec![],
            seed: common.seed,
            threads: common.threads,
            resolved_method: None,
            simulation: None,
        }
    }

    pub fn with_method_args(mut self, m: &MethodArgs) -> Self {
        self.method = Some(m.method);
        self.k = m.k;
        self.psi = m.psi;
        self.auto = m.auto;
        self.max_k = m.max_k;
        self.l = m.l;
        self
    }
}

fn check_l(l: Option<usize>) -> Result<usize, CliError> {
    match l.unwrap_or(DEFAULT_L) {
        l @ (1 | 2) => Ok(l),
        l => Err(CliError::Usage(format!("--l must be 1 or 2, got {l}"))),
    }
}

fn check_psi(psi: f64) -> Result<f64, CliError> {
    if psi.is_finite() && psi > 0.0 {
        Ok(psi)
    } else {
        Err(CliError::Usage(format!("--psi must be positive and finite, got {psi}")))
    }
}

/// Checks flag compatibility and fills defaults. `rows` is the number of
/// rows each fit sees, used for the default `--max-k`.
pub fn resolve_method(m: &MethodArgs, rows: usize) -> Result<FitMethod, CliError> {
    let name = format!("{:?}", m.method).to_lowercase();
    let reject = |flag: &str| CliError::Usage(format!("--{flag} is not accepted with --method {name}"));
    if m.k.is_some() && m.method != MethodName::L0 {
        return Err(reject("k"));
    }
    if m.psi.is_some() && !matches!(m.method, MethodName::L1 | MethodName::Huber) {
        return Err(reject("psi"));
    }
    if m.auto && !matches!(m.method, MethodName::L0 | MethodName::L1) {
        return Err(reject("auto"));
    }
    if m.l.is_some() && m.method != MethodName::L0 {
        return Err(reject("l"));
    }
    if m.max_k.is_some() && !(m.method == MethodName::L0 && m.auto) {
        return Err(CliError::Usage("--max-k requires --method l0 --auto".into()));
    }
    Ok(match m.method {
        MethodName::Ols => FitMethod::Ols,
        MethodName::Lad => FitMethod::Lad,
        MethodName::Huber => FitMethod::Huber { psi: check_psi(m.psi.unwrap_or(DEFAULT_HUBER_PSI))? },
        MethodName::L1 => match (m.psi, m.auto) {
            (Some(_), true) => return Err(CliError::Usage("give either --psi or --auto, not both".into())),
            (None, false) => return Err(CliError::Usage("--method l1 needs --psi or --auto".into())),
            (psi, _) => FitMethod::L1 { psi: psi.map(check_psi).transpose()? },
        },
        MethodName::L0 => {
            let l = check_l(m.l)?;
            match (m.k, m.auto) {
                (Some(_), true) => return Err(CliError::Usage("give either --k or --auto, not both".into())),
                (None, false) => return Err(CliError::Usage("--method l0 needs --k or --auto".into())),
                (Some(k), false) => FitMethod::L0 { k: Some(k), max_k: k, l },
                (None, true) => FitMethod::L0 { k: None, max_k: m.max_k.unwrap_or_else(|| FitMethod::default_max_k(rows)), l },
            }
        }
    })
}

pub fn resolve_tune_l(l: Option<usize>) -> Result<usize, CliError> {
    l.map_or(Ok(1), |l| check_l(Some(l)))
}

fn default_time_limit_s() -> f64 {
    OracleOptions::default().time_limit.as_secs_f64()
}

fn default_exhaustive_limit() -> u64 {
    OracleOptions::default().exhaustive_limit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_time_limit_s")]
    pub time_limit_s: f64,
    #[serde(default = "default_exhaustive_limit")]
    pub exhaustive_limit: u64,
}

impl OracleConfig {
    pub fn options(&self) -> Result<OracleOptions, CliError> {
        let time_limit = Duration::try_from_secs_f64(self.time_limit_s)
            .map_err(|_| CliError::Config(format!("oracle.time_limit_s: must be a non-negative number of seconds, got {}", self.time_limit_s)))?;
        Ok(OracleOptions { time_limit, exhaustive_limit: self.exhaustive_limit, ..OracleOptions::default() })
    }
}

fn default_estimators() -> Vec<EstimatorSpec> {
    EstimatorSpec::comparison_set()
}

/// The JSON file read by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dgp: DgpConfig,
    pub replications: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    /// Solve each replication exactly at the true budget when present.
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: SimulationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dgp.validate().map_err(|e| match e {
            l0robust::Error::InvalidInput(msg) => CliError::Config(format!("dgp.{msg}")),
            other => CliError::Config(format!("dgp: {other}")),
        })?;
        if self.replications == 0 {
            return Err(CliError::Config("replications: must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("estimators: list is empty".into()));
        }
        if let Some(o) = &self.oracle {
            o.options()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(method: MethodName) -> MethodArgs {
        MethodArgs { method, k: None, psi: None, auto: false, max_k: None, l: None }
    }

    #[test]
    fn parameter_compatibility() {
        let ok = |m: MethodArgs| resolve_method(&m, 100);
        assert_eq!(ok(MethodArgs { k: Some(3), ..args(MethodName::L0) }).unwrap(), FitMethod::L0 { k: Some(3), max_k: 3, l: 2 });
        assert_eq!(ok(MethodArgs { auto: true, ..args(MethodName::L0) }).unwrap(), FitMethod::L0 { k: None, max_k: 10, l: 2 });
        assert_eq!(ok(args(MethodName::Huber)).unwrap(), FitMethod::Huber { psi: DEFAULT_HUBER_PSI });
        assert!(matches!(ok(MethodArgs { psi: Some(1.0), k: Some(2), ..args(MethodName::L0) }), Err(CliError::Usage(_))));
        assert!(matches!(ok(MethodArgs { k: Some(2), ..args(MethodName::L1) }), Err(CliError::Usage(_))));
        assert!(matches!(ok(MethodArgs { auto: true, ..args(MethodName::Ols) }), Err(CliError::Usage(_))));
        assert!(matches!(ok(args(MethodName::L0)), Err(CliError::Usage(_))));
        assert!(matches!(ok(args(MethodName::L1)), Err(CliError::Usage(_))));
        assert!(matches!(ok(MethodArgs { k: Some(1), l: Some(3), ..args(MethodName::L0) }), Err(CliError::Usage(_))));
        assert!(matches!(ok(MethodArgs { psi: Some(-1.0), ..args(MethodName::Huber) }), Err(CliError::Usage(_))));
    }

    #[test]
    fn config_errors_name_the_field() {
        let Err(CliError::Config(msg)) = SimulationConfig::parse(r#"{"dgp": {"dgp": 1, "N": 40, "p": 1.5}, "replications": 1}"#) else {
            panic!()
        };
        assert!(msg.starts_with("dgp.p"), "{msg}");
        let Err(CliError::Config(msg)) = SimulationConfig::parse(r#"{"dgp": {"dgp": 1, "N": "x", "p": 0.1}, "replications": 1}"#) else {
            panic!()
        };
        assert!(msg.starts_with("dgp.N"), "{msg}");
        let Err(CliError::Config(msg)) = SimulationConfig::parse(r#"{"dgp": {"dgp": 1, "N": 40, "p": 0.1}, "replications": 0}"#) else {
            panic!()
        };
        assert!(msg.starts_with("replications"), "{msg}");
    }
}
