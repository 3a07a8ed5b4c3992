//! Rolling-window one-step-ahead forecasting.
//!
//! Rows are taken as time ordered. For every target row `t >= window` the
//! model is fitted on rows `t - window .. t` and evaluated at row `t`. A
//! window whose fit fails is recorded and skipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Dataset;
use crate::methods::{fit_method, FitMethod};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodForecast {
    /// 1-based row of the forecast target.
    pub target: usize,
    pub actual: f64,
    pub forecast: Option<f64>,
    pub sq_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubperiodMpse {
    /// First and last 1-based target rows, inclusive.
    pub start: usize,
    pub end: usize,
    /// Number of successful forecasts in the range.
    pub forecasts: usize,
    /// Mean squared forecast error, absent when no forecast succeeded.
    pub mpse: Option<f64>,
}

/// Rows flagged as outliers in the window ending before `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFlags {
    pub target: usize,
    /// 1-based rows of the full input.
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub window: usize,
    pub periods: Vec<PeriodForecast>,
    pub overall: SubperiodMpse,
    pub subperiods: Vec<SubperiodMpse>,
    pub flags: Vec<WindowFlags>,
    pub failed_windows: usize,
}

fn mpse(periods: &[PeriodForecast], start: usize, end: usize) -> SubperiodMpse {
    let errs: Vec<f64> = periods
        .iter()
        .filter(|p| p.target >= start && p.target <= end)
        .filter_map(|p| p.sq_error)
        .collect();
    let mpse = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
    SubperiodMpse { start, end, forecasts: errs.len(), mpse }
}

/// `boundaries` are 1-based target rows at which a new sub-period starts;
/// those outside the forecast range are ignored.
pub fn rolling_forecast(data: &Dataset, window: usize, method: &FitMethod, boundaries: &[usize]) -> Result<ForecastReport> {
    let n = data.n();
    if window >= n {
        return Err(Error::WindowTooLarge { window, rows: n });
    }
    if window < data.width() + 1 {
        return Err(Error::InvalidInput(format!(
            "window of {window} rows is too short for {} coefficients; need at least {}",
            data.width(),
            data.width() + 1
        )));
    }
    let targets = n - window;
    let results = par::map_indexed(targets, |j| {
        let t = window + j;
        let rows: Vec<usize> = (t - window..t).collect();
        let sub = data.select_rows(&rows);
        let actual = data.y()[t];
        match fit_method(&sub, method) {
            Ok(fit) => {
                let f = data.predict_row(t, &fit.beta);
                let flags = fit.outliers.iter().map(|&i| t - window + i + 1).collect();
                (
                    PeriodForecast { target: t + 1, actual, forecast: Some(f), sq_error: Some((actual - f).powi(2)), error: None },
                    WindowFlags { target: t + 1, flagged: flags },
                )
            }
            Err(e) => (
                PeriodForecast { target: t + 1, actual, forecast: None, sq_error: None, error: Some(e.to_string()) },
                WindowFlags { target: t + 1, flagged: vec![] },
            ),
        }
    });
    let (periods, flags): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let failed_windows = periods.iter().filter(|p| p.error.is_some()).count();
    if failed_windows > 0 {
        log::warn!("{failed_windows} of {targets} forecast windows failed and were skipped");
    }
    let (first, last) = (window + 1, n);
    let mut cuts: Vec<usize> = boundaries.iter().copied().filter(|&b| b > first && b <= last).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut starts = vec![first];
    starts.extend(cuts);
    let subperiods = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| mpse(&periods, s, starts.get(i + 1).map_or(last, |next| next - 1)))
        .collect();
    Ok(ForecastReport { window, overall: mpse(&periods, first, last), subperiods, periods, flags, failed_windows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(y: Vec<f64>) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![(i % 4) as f64]).collect();
        Dataset::new(y, &rows, true).unwrap()
    }

    #[test]
    fn constant_series_has_zero_error() {
        let data = series(vec![2.5; 30]);
        for m in [FitMethod::Ols, FitMethod::Lad] {
            let rep = rolling_forecast(&data, 10, &m, &[]).unwrap();
            assert_eq!(rep.periods.len(), 20);
            assert!(rep.overall.mpse.unwrap() < 1e-20);
        }
    }

    #[test]
    fn subperiods_average_their_own_errors() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 37) % 13) as f64).collect();
        let data = series(y);
        let rep = rolling_forecast(&data, 12, &FitMethod::Ols, &[20, 30]).unwrap();
        assert_eq!(rep.subperiods.len(), 3);
        assert_eq!((rep.subperiods[0].start, rep.subperiods[0].end), (13, 19));
        assert_eq!((rep.subperiods[2].start, rep.subperiods[2].end), (30, 40));
        for sp in &rep.subperiods {
            let mut acc = 0.0;
            let mut cnt = 0;
            for p in &rep.periods {
                if p.target >= sp.start && p.target <= sp.end {
                    let f = p.forecast.unwrap();
                    acc += (p.actual - f) * (p.actual - f);
                    cnt += 1;
                }
            }
            assert_eq!(sp.forecasts, cnt);
            assert!((sp.mpse.unwrap() - acc / cnt as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let data = series(vec![1.0; 10]);
        assert!(matches!(rolling_forecast(&data, 10, &FitMethod::Ols, &[]), Err(Error::WindowTooLarge { .. })));
        assert!(rolling_forecast(&data, 2, &FitMethod::Ols, &[]).is_err());
    }

    #[test]
    fn failing_windows_are_skipped() {
        // the regressor is constant in the early windows, so the design is singular there
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 8 { 1.0 } else { i as f64 }]).collect();
        let y = (0..20).map(|i| i as f64).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let rep = rolling_forecast(&data, 5, &FitMethod::Ols, &[]).unwrap();
        assert!(rep.failed_windows > 0);
        assert!(rep.periods.iter().any(|p| p.forecast.is_some()));
        assert_eq!(rep.overall.forecasts, rep.periods.len() - rep.failed_windows);
    }
}
