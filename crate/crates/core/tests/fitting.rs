use std::f64::consts::PI;

use rhodium_core::beat::BeatParams;
use rhodium_core::constants::RH_TAU0_S;
use rhodium_core::fitting::{chi2, fit_beat, fit_series, FitConfig, FitParam, FitSeries};
use rhodium_core::spectra::{simulate_counts, Binning, CountSeries};

fn truth() -> BeatParams {
    BeatParams {
        n0: 5.0,
        tau0: RH_TAU0_S,
        tau_d: RH_TAU0_S / 10.0,
        phi0: 1.1,
        t_pump: 3600.0,
        background: 0.0,
    }
}

fn binning() -> Binning {
    Binning { width: 120.0, horizon: 120.0 * 240.0 }
}

fn start() -> BeatParams {
    BeatParams { n0: 1.0, tau_d: RH_TAU0_S, phi0: 0.0, ..truth() }
}

fn gamma(seed: u64) -> CountSeries {
    simulate_counts(&truth(), 1.0, &binning(), seed).unwrap().0
}

#[test]
fn chi2_per_dof_near_one_at_truth() {
    let seeds = 40;
    let inside = (0..seeds)
        .filter(|&s| {
            let g = gamma(s);
            let c = chi2(&g, &truth()).unwrap() / g.len() as f64;
            (0.7..=1.3).contains(&c)
        })
        .count();
    assert!(inside as f64 >= 0.95 * seeds as f64, "{inside}/{seeds}");
}

#[test]
fn covariance_is_symmetric_psd_and_covers_truth() {
    let fit = fit_beat(&gamma(3), &FitConfig::new(start())).unwrap();
    assert!(fit.converged, "{}", fit.message);
    assert!(fit.chi2 >= 0.0);
    let c = &fit.covariance;
    let n = c.len();
    assert_eq!(n, 3);
    for i in 0..n {
        assert!(c[i][i] > 0.0);
        for j in 0..n {
            assert!((c[i][j] - c[j][i]).abs() <= 1e-12 * (c[i][i] * c[j][j]).sqrt());
        }
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| c[i][j]);
    assert!(m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12 * m.norm()));
    let idx = fit.covariance_params.iter().position(|&p| p == FitParam::TauD).unwrap();
    let sigma = c[idx][idx].sqrt();
    assert!((fit.params.tau_d - truth().tau_d).abs() <= 5.0 * sigma, "{} +- {sigma}", fit.params.tau_d);
}

#[test]
fn no_beat_data_gives_inverse_tau_d_consistent_with_zero() {
    let flat = BeatParams { tau_d: f64::INFINITY, ..truth() };
    let (g, _) = simulate_counts(&flat, 1.0, &binning(), 5).unwrap();
    let mut cfg = FitConfig::new(start());
    cfg.bounds.tau_d = (10.0, 1e9);
    let fit = fit_beat(&g, &cfg).unwrap();
    let inv = fit.inv_tau_d.unwrap();
    let upper = fit.inv_tau_d_upper.unwrap();
    assert!(upper >= inv);
    // a beat inside the window would have tau_d below the data span
    assert!(upper < 1.0 / binning().horizon, "upper bound {upper}");
    assert!(fit.chi2 / fit.dof as f64 <= 1.5);
}

#[test]
fn scale_equivariance() {
    let layout = binning().layout().unwrap();
    let observed: Vec<f64> = gamma(8).bins.iter().map(|b| b.counts as f64).collect();
    let c = 7.5;
    let mut cfg = FitConfig::new(start());
    let base = fit_series(&FitSeries::from_values(layout.clone(), observed.clone()).unwrap(), &cfg).unwrap();
    cfg.bounds.n0 = (cfg.bounds.n0.0 * c, cfg.bounds.n0.1 * c);
    cfg.initial.n0 *= c;
    let scaled_obs: Vec<f64> = observed.iter().map(|o| o * c).collect();
    let scaled = fit_series(&FitSeries::from_values(layout, scaled_obs).unwrap(), &cfg).unwrap();
    assert!((scaled.params.n0 / (c * base.params.n0) - 1.0).abs() <= 1e-6);
    assert!((scaled.params.tau_d / base.params.tau_d - 1.0).abs() <= 1e-6);
    assert!((scaled.params.phi0 - base.params.phi0).abs() <= 1e-6);
}

#[test]
fn phase_is_reported_modulo_pi() {
    let mut cfg = FitConfig::new(start());
    cfg.bounds.phi0 = (-PI, 2.0 * PI);
    cfg.phase_grid = 12;
    let fit = fit_beat(&gamma(2), &cfg).unwrap();
    assert!((0.0..PI).contains(&fit.params.phi0));
    assert!((fit.params.phi0 - truth().phi0).abs() < 0.1);
}

#[test]
fn multistart_is_deterministic_across_thread_counts() {
    let g = gamma(6);
    let cfg = FitConfig::new(start());
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit_beat(&g, &cfg).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&many).unwrap());
}

#[test]
fn background_can_be_fitted() {
    let p = BeatParams { background: 0.05, ..truth() };
    let (g, _) = simulate_counts(&p, 1.0, &binning(), 12).unwrap();
    let mut cfg = FitConfig::new(start());
    cfg.free_params.push(FitParam::Background);
    let fit = fit_beat(&g, &cfg).unwrap();
    assert_eq!(fit.dof, g.len() as i64 - 4);
    assert!((fit.params.tau_d / p.tau_d - 1.0).abs() < 0.05);
    assert!((fit.params.background / p.background - 1.0).abs() < 0.3, "{}", fit.params.background);
}
