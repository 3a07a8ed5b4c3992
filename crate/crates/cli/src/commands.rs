use std::path::Path;

use l0robust::classic::fit_lad;
use l0robust::forecast::{rolling_forecast, ForecastReport};
use l0robust::l0::{select_k_bic, BicEntry};
use l0robust::l1::{default_psi_grid, select_psi_bic, PsiTraceEntry};
use l0robust::methods::{fit_method, FitMethod};
use l0robust::montecarlo::{run_monte_carlo, Estimator, MonteCarloOptions, MonteCarloReport};
use serde::Serialize;

use crate::config::{resolve_method, resolve_tune_l, CommandName, CommonArgs, MethodArgs, RunConfig, SimulationConfig, TuneMethod};
use crate::error::CliError;
use crate::io::{companion, read_table, write_csv, write_csv_with_header, write_json};

#[derive(Serialize)]
struct Report<'a, T> {
    version: &'static str,
    command: CommandName,
    config: &'a RunConfig,
    result: T,
}

fn emit<T: Serialize>(cfg: &RunConfig, result: T) -> Result<(), CliError> {
    let report = Report { version: l0robust::VERSION, command: cfg.command, config: cfg, result };
    write_json(cfg.output_path.as_deref(), &report)
}

#[derive(Serialize)]
pub struct Coefficient {
    pub name: String,
    pub value: f64,
}

#[derive(Serialize)]
struct FitResult {
    response: String,
    rows: usize,
    coefficients: Vec<Coefficient>,
    /// 1-based rows in input order.
    outliers: Vec<usize>,
    alpha: Vec<f64>,
    residuals: Vec<f64>,
    objective: f64,
    k: Option<usize>,
    psi: Option<f64>,
    bic_trace: Option<Vec<BicEntry>>,
    psi_trace: Option<Vec<PsiTraceEntry>>,
    ols_bic: Option<f64>,
}

pub fn fit(input: &Path, m: &MethodArgs, common: &CommonArgs) -> Result<(), CliError> {
    let table = read_table(input)?;
    let method = resolve_method(m, table.data.n())?;
    let mut cfg = RunConfig::new(CommandName::Fit, common).with_method_args(m);
    cfg.input_path = Some(input.to_path_buf());
    cfg.resolved_method = Some(method.clone());
    let f = fit_method(&table.data, &method).map_err(|e| CliError::from_core("fit", e))?;
    let residuals = f.adjusted_residuals(&table.data).map_err(|e| CliError::from_core("fit", e))?;
    let result = FitResult {
        response: table.response.clone(),
        rows: table.data.n(),
        coefficients: table
            .coefficient_names()
            .into_iter()
            .zip(f.beta.iter())
            .map(|(name, &value)| Coefficient { name, value })
            .collect(),
        outliers: f.outliers.iter().map(|i| i + 1).collect(),
        alpha: f.alpha,
        residuals,
        objective: f.objective,
        k: f.k,
        psi: f.psi,
        bic_trace: f.k_trace,
        psi_trace: f.psi_trace,
        ols_bic: f.ols_bic,
    };
    emit(&cfg, result)
}

#[derive(Serialize)]
#[serde(untagged)]
enum TuneTrace {
    K(Vec<BicEntry>),
    Psi(Vec<PsiTraceEntry>),
}

#[derive(Serialize)]
struct TuneResult {
    selected_k: Option<usize>,
    selected_psi: Option<f64>,
    /// 1-based rows flagged at the selected value.
    outliers: Vec<usize>,
    ols_bic: Option<f64>,
    trace: TuneTrace,
}

pub fn tune(input: &Path, method: TuneMethod, max_k: Option<usize>, l: Option<usize>, common: &CommonArgs) -> Result<(), CliError> {
    let table = read_table(input)?;
    let data = &table.data;
    let mut cfg = RunConfig::new(CommandName::Tune, common);
    cfg.input_path = Some(input.to_path_buf());
    let result = match method {
        TuneMethod::L0 => {
            let l = resolve_tune_l(l)?;
            let max_k = max_k.unwrap_or_else(|| FitMethod::default_max_k(data.n()));
            cfg.method = Some(crate::config::MethodName::L0);
            cfg.auto = true;
            cfg.max_k = Some(max_k);
            cfg.l = Some(l);
            let ctx = |e| CliError::from_core("tune", e);
            let beta0 = fit_lad(data).map_err(ctx)?.beta;
            let sel = select_k_bic(data, &beta0, max_k, l).map_err(ctx)?;
            TuneResult {
                selected_k: Some(sel.k),
                selected_psi: None,
                outliers: sel.solution.outliers.iter().map(|i| i + 1).collect(),
                ols_bic: sel.ols_bic,
                trace: TuneTrace::K(sel.trace),
            }
        }
        TuneMethod::L1 => {
            if max_k.is_some() || l.is_some() {
                return Err(CliError::Usage("--max-k and --l apply to --method l0 only".into()));
            }
            cfg.method = Some(crate::config::MethodName::L1);
            cfg.auto = true;
            let ctx = |e| CliError::from_core("tune", e);
            let sel = select_psi_bic(data, &default_psi_grid(data).map_err(ctx)?).map_err(ctx)?;
            TuneResult {
                selected_k: None,
                selected_psi: Some(sel.solution.psi),
                outliers: sel.solution.outliers().iter().map(|i| i + 1).collect(),
                ols_bic: None,
                trace: TuneTrace::Psi(sel.trace),
            }
        }
    };
    if let Some(out) = &cfg.output_path {
        let path = companion(out, "trace");
        match &result.trace {
            TuneTrace::K(t) => write_csv_with_header(&path, &["k", "objective", "bic"], t)?,
            TuneTrace::Psi(t) => write_csv_with_header(&path, &["psi", "bic", "n_outliers", "admissible"], t)?,
        }
    }
    emit(&cfg, result)
}

#[derive(Serialize)]
struct ForecastRow {
    target: usize,
    actual: f64,
    forecast: Option<f64>,
    sq_error: Option<f64>,
    status: &'static str,
}

#[derive(Serialize)]
struct MpseRow {
    period: String,
    start: usize,
    end: usize,
    forecasts: usize,
    mpse: Option<f64>,
}

#[derive(Serialize)]
struct FlagRow {
    target: usize,
    row: usize,
}

fn write_forecast_tables(out: &Path, rep: &ForecastReport) -> Result<(), CliError> {
    write_csv_with_header(
        &companion(out, "forecasts"),
        &["target", "actual", "forecast", "sq_error", "status"],
        rep.periods.iter().map(|p| ForecastRow {
            target: p.target,
            actual: p.actual,
            forecast: p.forecast,
            sq_error: p.sq_error,
            status: if p.error.is_some() { "failed" } else { "ok" },
        }),
    )?;
    let mpse = std::iter::once(("all".to_string(), &rep.overall))
        .chain(rep.subperiods.iter().enumerate().map(|(i, s)| ((i + 1).to_string(), s)))
        .map(|(period, s)| MpseRow { period, start: s.start, end: s.end, forecasts: s.forecasts, mpse: s.mpse });
    write_csv_with_header(&companion(out, "mpse"), &["period", "start", "end", "forecasts", "mpse"], mpse)?;
    let flags = rep.flags.iter().flat_map(|w| w.flagged.iter().map(|&row| FlagRow { target: w.target, row }));
    write_csv_with_header(&companion(out, "flags"), &["target", "row"], flags)
}

pub fn forecast(input: &Path, window: usize, periods: &[usize], m: &MethodArgs, common: &CommonArgs) -> Result<(), CliError> {
    let table = read_table(input)?;
    let data = &table.data;
    let method = resolve_method(m, window)?;
    let mut cfg = RunConfig::new(CommandName::Forecast, common).with_method_args(m);
    cfg.input_path = Some(input.to_path_buf());
    cfg.window = Some(window);
    cfg.periods = periods.to_vec();
    cfg.resolved_method = Some(method.clone());
    let min_window = data.d() + 2;
    if window < min_window {
        return Err(CliError::Usage(format!("--window must be at least {min_window} with {} regressors, got {window}", data.d())));
    }
    let rep = rolling_forecast(data, window, &method, periods).map_err(|e| CliError::from_core("forecast", e))?;
    if rep.failed_windows == rep.periods.len() {
        let first = rep.periods.first().and_then(|p| p.error.clone()).unwrap_or_default();
        return Err(CliError::Numerical(format!("every forecast window failed; first error: {first}")));
    }
    if let Some(out) = &cfg.output_path {
        write_forecast_tables(out, &rep)?;
    }
    emit(&cfg, rep)
}

pub fn simulate(config: &Path, common: &CommonArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let mut sim = SimulationConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        sim.dgp.seed = seed;
    }
    let mut cfg = RunConfig::new(CommandName::Simulate, common);
    cfg.config_path = Some(config.to_path_buf());
    cfg.seed = Some(sim.dgp.seed);
    let options = MonteCarloOptions {
        replications: sim.replications,
        oracle: sim.oracle.as_ref().map(|o| o.options()).transpose()?,
    };
    let estimators: Vec<&dyn Estimator> = sim.estimators.iter().map(|e| e as &dyn Estimator).collect();
    let report: MonteCarloReport =
        run_monte_carlo(&sim.dgp, &estimators, &options).map_err(|e| CliError::from_core("simulate", e))?;
    cfg.simulation = Some(sim);
    if let Some(out) = &cfg.output_path {
        write_csv(&companion(out, "summary"), report.summaries.iter().map(|s| s.row()))?;
        write_csv(&companion(out, "records"), &report.records)?;
        write_csv_with_header(
            &companion(out, "oracle"),
            &["replication", "primal", "dual", "proven_optimal", "nodes_explored", "wall_s"],
            &report.oracle,
        )?;
    }
    emit(&cfg, report)
}
