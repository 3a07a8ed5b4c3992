use l0robust::classic::fit_ols;
use l0robust::dgp::{generate, Dgp, DgpConfig};
use l0robust::forecast::rolling_forecast;
use l0robust::methods::FitMethod;
use l0robust::montecarlo::{prediction_error, run_monte_carlo, Estimator, EstimatorSpec, MonteCarloOptions, MonteCarloReport};
use l0robust::oracle::OracleOptions;
use l0robust::Dataset;
use proptest::prelude::*;

fn small(dgp: Dgp) -> DgpConfig {
    let mut cfg = DgpConfig::new(dgp, 40, 0.1);
    cfg.mu_alpha = 5.0;
    cfg.sigma_alpha = 5.0;
    cfg.rho = 5.0;
    cfg.seed = 99;
    cfg.n_test = 200;
    cfg
}

fn without_timing(mut rep: MonteCarloReport) -> MonteCarloReport {
    for r in &mut rep.records {
        r.cpu_s = 0.0;
    }
    for s in &mut rep.summaries {
        s.cpu_s = 0.0;
    }
    for o in &mut rep.oracle {
        o.wall_s = 0.0;
    }
    rep
}

#[test]
fn replications_do_not_depend_on_thread_count() {
    let cfg = small(Dgp::Endogenous);
    let specs = [EstimatorSpec::comparison_set(), EstimatorSpec::heuristic_set()].concat();
    let ests: Vec<&dyn Estimator> = specs.iter().map(|e| e as &dyn Estimator).collect();
    let opts = MonteCarloOptions { replications: 6, oracle: Some(OracleOptions::default()) };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        without_timing(pool.install(|| run_monte_carlo(&cfg, &ests, &opts).unwrap()))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn true_coefficients_have_no_error() {
    let cfg = small(Dgp::Exogenous);
    let rep = run_monte_carlo(&cfg, &[&EstimatorSpec::TrueBeta], &MonteCarloOptions { replications: 5, oracle: None }).unwrap();
    let s = &rep.summaries[0];
    assert_eq!((s.bias, s.rmse), (0.0, 0.0));
    // the test-set prediction error of the true coefficients is the noise variance
    assert!((s.pred_err - 1.0).abs() < 0.15, "{}", s.pred_err);
}

#[test]
fn summary_statistics_match_the_records() {
    let cfg = small(Dgp::Predictive);
    let rep = run_monte_carlo(&cfg, &[&EstimatorSpec::Ols, &EstimatorSpec::Lad], &MonteCarloOptions { replications: 8, oracle: None }).unwrap();
    for s in &rep.summaries {
        let errs: Vec<f64> = rep.records.iter().filter(|r| r.estimator == s.estimator).filter_map(|r| r.beta1_err).collect();
        let preds: Vec<f64> = rep.records.iter().filter(|r| r.estimator == s.estimator).filter_map(|r| r.pred_err).collect();
        let m = errs.len() as f64;
        let bias = errs.iter().sum::<f64>() / m;
        let mse = errs.iter().map(|e| e * e).sum::<f64>() / m;
        assert!((s.bias - bias).abs() < 1e-12);
        assert!((s.rmse - mse.sqrt()).abs() < 1e-12);
        assert!((s.pred_err - preds.iter().sum::<f64>() / m).abs() < 1e-12);
        assert_eq!(s.replications, 8);
    }
}

#[test]
fn prediction_error_is_mean_squared_test_error() {
    let cfg = small(Dgp::Exogenous);
    let sample = generate(&cfg, 0).unwrap();
    let beta = fit_ols(&sample.train).unwrap().beta;
    let test = &sample.test;
    let want = (0..test.n()).map(|i| (test.y()[i] - test.predict_row(i, &beta)).powi(2)).sum::<f64>() / test.n() as f64;
    assert!((prediction_error(test, &beta) - want).abs() < 1e-12);
}

/// Rolling forecasts recomputed window by window with a direct least-squares fit.
#[test]
fn rolling_ols_matches_direct_refits() {
    let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.7).sin(), ((i * 13) % 7) as f64]).collect();
    let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| 1.0 + r[0] - 0.3 * r[1] + 0.1 * ((i * 17 % 11) as f64 - 5.0)).collect();
    let data = Dataset::new(y, &rows, true).unwrap();
    let window = 15;
    let rep = rolling_forecast(&data, window, &FitMethod::Ols, &[30]).unwrap();
    assert_eq!(rep.periods.len(), 35);
    for p in &rep.periods {
        let t = p.target - 1;
        let sub = data.select_rows(&(t - window..t).collect::<Vec<_>>());
        let beta = fit_ols(&sub).unwrap().beta;
        let f = data.predict_row(t, &beta);
        assert!((p.forecast.unwrap() - f).abs() < 1e-10);
        assert!((p.sq_error.unwrap() - (data.y()[t] - f).powi(2)).abs() < 1e-9);
    }
    let total: f64 = rep.periods.iter().map(|p| p.sq_error.unwrap()).sum();
    assert!((rep.overall.mpse.unwrap() - total / 35.0).abs() < 1e-12);
    assert_eq!(rep.subperiods[0].forecasts + rep.subperiods[1].forecasts, 35);
}

#[test]
fn level_shift_hurts_least_squares_more_than_l0() {
    let rows: Vec<Vec<f64>> = (0..90).map(|i| vec![((i * 5) % 9) as f64 - 4.0]).collect();
    let y: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| 1.0 + 0.5 * r[0] + 0.2 * (((i * 7) % 11) as f64 - 5.0) / 5.0 + if (40..45).contains(&i) { 9.0 } else { 0.0 })
        .collect();
    let data = Dataset::new(y, &rows, true).unwrap();
    let post_break = [46];
    let l0 = rolling_forecast(&data, 24, &FitMethod::L0 { k: Some(5), max_k: 5, l: 2 }, &post_break).unwrap();
    let ols = rolling_forecast(&data, 24, &FitMethod::Ols, &post_break).unwrap();
    let (a, b) = (l0.subperiods[1].mpse.unwrap(), ols.subperiods[1].mpse.unwrap());
    assert!(a <= b, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samples_are_reproducible(seed in 0u64..1_000, r in 0u64..50, which in 1u8..=3) {
        let dgp = match which { 1 => Dgp::Exogenous, 2 => Dgp::Endogenous, _ => Dgp::Predictive };
        let mut cfg = small(dgp);
        cfg.seed = seed;
        cfg.n_test = 20;
        let a = generate(&cfg, r).unwrap();
        let b = generate(&cfg, r).unwrap();
        prop_assert_eq!(a.train.y(), b.train.y());
        prop_assert_eq!(a.test.y(), b.test.y());
        prop_assert_eq!(a.true_outliers.len(), match dgp { Dgp::Predictive => 2 * (cfg.k0() / 2), _ => cfg.k0() });
    }
}
