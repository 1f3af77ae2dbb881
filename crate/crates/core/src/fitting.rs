//! Weighted least-squares recovery of beat parameters from binned data.
//!
//! The model is linear in `n0` and `background`, so for every trial
//! (`tau_d`, `phi0`) those two are solved exactly (box-constrained) and only the
//! nonlinear pair is searched: a coarse log-spaced `tau_d` scan per phase start,
//! then Nelder-Mead. Phase starts run in parallel; the best start wins, ties
//! going to the smaller `tau_d`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beat::{bin_shape_integrals, reduce_phase, BeatKernel, BeatParams};
use crate::error::{Error, Result};
use crate::quadrature::QuadSettings;
use crate::spectra::{kalpha_bin_expectation, CountSeries, RatioSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    N0,
    TauD,
    Phi0,
    Background,
}

impl FitParam {
    pub const ALL: [FitParam; 4] = [FitParam::N0, FitParam::TauD, FitParam::Phi0, FitParam::Background];

    fn get(self, p: &BeatParams) -> f64 {
        match self {
            FitParam::N0 => p.n0,
            FitParam::TauD => p.tau_d,
            FitParam::Phi0 => p.phi0,
            FitParam::Background => p.background,
        }
    }

    fn set(self, p: &mut BeatParams, value: f64) {
        match self {
            FitParam::N0 => p.n0 = value,
            FitParam::TauD => p.tau_d = value,
            FitParam::Phi0 => p.phi0 = value,
            FitParam::Background => p.background = value,
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitParam::N0 => "n0",
            FitParam::TauD => "tau_d",
            FitParam::Phi0 => "phi0",
            FitParam::Background => "background",
        })
    }
}

/// Closed search interval for each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBounds {
    pub n0: (f64, f64),
    pub tau_d: (f64, f64),
    pub phi0: (f64, f64),
    pub background: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            n0: (0.0, 1e12),
            tau_d: (1.0, 1e9),
            phi0: (0.0, PI),
            background: (0.0, 1e9),
        }
    }
}

impl ParamBounds {
    pub fn get(&self, param: FitParam) -> (f64, f64) {
        match param {
            FitParam::N0 => self.n0,
            FitParam::TauD => self.tau_d,
            FitParam::Phi0 => self.phi0,
            FitParam::Background => self.background,
        }
    }
}

fn default_free() -> Vec<FitParam> {
    vec![FitParam::N0, FitParam::TauD, FitParam::Phi0]
}

fn default_phase_grid() -> usize {
    8
}

fn default_tau_d_grid() -> usize {
    48
}

fn default_max_iters() -> usize {
    2000
}

fn default_tolerance() -> f64 {
    1e-12
}

/// Fit controls. `initial` supplies tau0, T_p and the values of fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub initial: BeatParams,
    #[serde(default = "default_free")]
    pub free_params: Vec<FitParam>,
    #[serde(default)]
    pub bounds: ParamBounds,
    /// Number of phase starts spread over the phase bounds.
    #[serde(default = "default_phase_grid")]
    pub phase_grid: usize,
    /// Points of the log-spaced tau_d scan that seeds each start.
    #[serde(default = "default_tau_d_grid")]
    pub tau_d_grid: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative chi2 spread at which a simplex counts as converged.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub kernel: BeatKernel,
}

impl FitConfig {
    pub fn new(initial: BeatParams) -> Self {
        Self {
            initial,
            free_params: default_free(),
            bounds: ParamBounds::default(),
            phase_grid: default_phase_grid(),
            tau_d_grid: default_tau_d_grid(),
            max_iters: default_max_iters(),
            tolerance: default_tolerance(),
            kernel: BeatKernel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        if self.initial.t_pump <= 0.0 {
            return Err(Error::domain("fitting needs t_pump > 0"));
        }
        for param in FitParam::ALL {
            let (lo, hi) = self.bounds.get(param);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::domain(format!(
                    "bounds for {param} must be finite with lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.bounds.tau_d.0 <= 0.0 {
            return Err(Error::domain("tau_d lower bound must be > 0"));
        }
        if self.phase_grid == 0 {
            return Err(Error::domain("phase_grid must be at least 1"));
        }
        if self.tau_d_grid == 0 {
            return Err(Error::domain("tau_d_grid must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::domain("tolerance must be > 0"));
        }
        Ok(())
    }

    fn is_free(&self, param: FitParam) -> bool {
        self.free_params.contains(&param)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    /// Raw counts; the model is the expected counts per bin.
    Counts,
    /// Gamma / K-alpha ratio; the model is divided by the unit K-alpha expectation,
    /// so the fitted n0 is relative to the K-alpha scale.
    Ratio,
}

/// Observations prepared for fitting: bins, values and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSeries {
    pub layout: Vec<(f64, f64)>,
    pub observed: Vec<f64>,
    pub sigma: Vec<f64>,
    pub kind: SeriesKind,
}

impl FitSeries {
    /// Counts with sigma = sqrt(max(counts, 1)).
    pub fn from_counts(series: &CountSeries) -> Result<Self> {
        let observed: Vec<f64> = series.bins.iter().map(|b| b.counts as f64).collect();
        Self::from_values(series.layout(), observed)
    }

    /// Real-valued counts (e.g. noiseless expectations) with sigma = sqrt(max(value, 1)).
    pub fn from_values(layout: Vec<(f64, f64)>, observed: Vec<f64>) -> Result<Self> {
        if layout.is_empty() {
            return Err(Error::structure("cannot fit an empty series"));
        }
        if layout.len() != observed.len() {
            return Err(Error::structure("layout and observations differ in length"));
        }
        let sigma = observed.iter().map(|&c| c.max(1.0).sqrt()).collect();
        Ok(Self {
            layout,
            observed,
            sigma,
            kind: SeriesKind::Counts,
        })
    }

    /// Valid bins of a ratio series, weighted by their propagated sigma.
    pub fn from_ratio(series: &RatioSeries) -> Result<Self> {
        let bins: Vec<_> = series
            .bins
            .iter()
            .filter(|b| b.valid && b.sigma > 0.0)
            .collect();
        if bins.is_empty() {
            return Err(Error::structure("ratio series has no valid bins"));
        }
        Ok(Self {
            layout: bins.iter().map(|b| (b.t_start, b.width)).collect(),
            observed: bins.iter().map(|b| b.ratio).collect(),
            sigma: bins.iter().map(|b| b.sigma).collect(),
            kind: SeriesKind::Ratio,
        })
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// Per-bin divisor applied to the count model.
    fn divisors(&self, p: &BeatParams) -> Vec<f64> {
        match self.kind {
            SeriesKind::Counts => vec![1.0; self.len()],
            SeriesKind::Ratio => self
                .layout
                .iter()
                .map(|&(t, w)| kalpha_bin_expectation(1.0, p.tau0, p.t_pump, t, w))
                .collect(),
        }
    }
}

fn fit_quadrature() -> QuadSettings {
    QuadSettings {
        rel_tol: 1e-11,
        ..Default::default()
    }
}

/// Weighted design columns for n0 and background at fixed (tau_d, phi0).
struct Design {
    n0_col: Vec<f64>,
    bg_col: Vec<f64>,
    target: Vec<f64>,
}

fn design(series: &FitSeries, p: &BeatParams, kernel: BeatKernel) -> Result<Design> {
    let shapes = bin_shape_integrals(p, &series.layout, kernel, &fit_quadrature())?;
    let divisors = series.divisors(p);
    let n = series.len();
    let mut n0_col = Vec::with_capacity(n);
    let mut bg_col = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let scale = 1.0 / (series.sigma[i] * divisors[i]);
        n0_col.push(shapes[i] * scale);
        bg_col.push(p.t_pump * series.layout[i].1 * scale);
        target.push(series.observed[i] / series.sigma[i]);
    }
    Ok(Design { n0_col, bg_col, target })
}

fn weighted_chi2(d: &Design, n0: f64, background: f64) -> f64 {
    d.target
        .iter()
        .zip(d.n0_col.iter().zip(&d.bg_col))
        .map(|(y, (a, b))| (y - n0 * a - background * b).powi(2))
        .sum()
}

/// chi2 = sum ((observed - model) / sigma)^2 over the prepared series.
pub fn chi2_series(series: &FitSeries, params: &BeatParams, kernel: BeatKernel) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::structure("cannot evaluate chi2 on an empty series"));
    }
    params.validate()?;
    let d = design(series, params, kernel)?;
    Ok(weighted_chi2(&d, params.n0, params.background))
}

/// chi2 of a count series against the cos^2 model, sigma = sqrt(max(counts, 1)).
pub fn chi2(series: &CountSeries, params: &BeatParams) -> Result<f64> {
    chi2_series(&FitSeries::from_counts(series)?, params, BeatKernel::Cos2)
}

/// Exact minimiser of the weighted chi2 over the free linear parameters inside
/// their bounds. With at most two unknowns, every combination of
/// "free / at lower bound / at upper bound" is tried.
fn solve_linear(
    d: &Design,
    free: [bool; 2],
    fixed: [f64; 2],
    bounds: [(f64, f64); 2],
) -> (f64, [f64; 2]) {
    let cols = [&d.n0_col, &d.bg_col];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = [
        [dot(cols[0], cols[0]), dot(cols[0], cols[1])],
        [dot(cols[1], cols[0]), dot(cols[1], cols[1])],
    ];
    let rhs = [dot(cols[0], &d.target), dot(cols[1], &d.target)];

    #[derive(Clone, Copy)]
    enum State {
        Free,
        Lo,
        Hi,
    }
    let options = |i: usize| -> Vec<State> {
        if free[i] {
            vec![State::Free, State::Lo, State::Hi]
        } else {
            vec![State::Lo]
        }
    };
    let mut best: Option<(f64, [f64; 2])> = None;
    for s0 in options(0) {
        for s1 in options(1) {
            let states = [s0, s1];
            let mut values = [0.0; 2];
            let mut unknown = Vec::new();
            for i in 0..2 {
                values[i] = match (free[i], states[i]) {
                    (false, _) => fixed[i],
                    (true, State::Lo) => bounds[i].0,
                    (true, State::Hi) => bounds[i].1,
                    (true, State::Free) => {
                        unknown.push(i);
                        0.0
                    }
                };
            }
            let ok = match unknown.as_slice() {
                [] => true,
                [i] => {
                    let j = 1 - i;
                    if gram[*i][*i] > 0.0 {
                        values[*i] = (rhs[*i] - gram[*i][j] * values[j]) / gram[*i][*i];
                        true
                    } else {
                        false
                    }
                }
                _ => {
                    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
                    if det.abs() > 1e-14 * gram[0][0] * gram[1][1] && det != 0.0 {
                        values[0] = (rhs[0] * gram[1][1] - gram[0][1] * rhs[1]) / det;
                        values[1] = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
                        true
                    } else {
                        false
                    }
                }
            };
            if !ok {
                continue;
            }
            let feasible = unknown
                .iter()
                .all(|&i| values[i] >= bounds[i].0 && values[i] <= bounds[i].1);
            if !feasible {
                continue;
            }
            let c = weighted_chi2(d, values[0], values[1]);
            if best.is_none_or(|(b, _)| c < b) {
                best = Some((c, values));
            }
        }
    }
    best.unwrap_or_else(|| {
        let values = [
            if free[0] { bounds[0].0 } else { fixed[0] },
            if free[1] { bounds[1].0 } else { fixed[1] },
        ];
        (weighted_chi2(d, values[0], values[1]), values)
    })
}

/// Profile objective over the nonlinear parameters.
struct Problem<'a> {
    series: &'a FitSeries,
    cfg: &'a FitConfig,
}

impl Problem<'_> {
    fn params(&self, tau_d: f64, phi0: f64) -> BeatParams {
        BeatParams {
            tau_d,
            phi0,
            ..self.cfg.initial
        }
    }

    /// Best chi2 and linear parameters at (tau_d, phi0).
    fn profile(&self, tau_d: f64, phi0: f64) -> Result<(f64, [f64; 2])> {
        let p = self.params(tau_d, phi0);
        let d = design(self.series, &p, self.cfg.kernel)?;
        let cfg = self.cfg;
        Ok(solve_linear(
            &d,
            [cfg.is_free(FitParam::N0), cfg.is_free(FitParam::Background)],
            [cfg.initial.n0, cfg.initial.background],
            [cfg.bounds.n0, cfg.bounds.background],
        ))
    }

    /// Maps search coordinates (ln tau_d and/or phi0) to clamped parameter values.
    fn decode(&self, x: &[f64]) -> (f64, f64) {
        let cfg = self.cfg;
        let mut it = x.iter();
        let tau_d = if cfg.is_free(FitParam::TauD) {
            let (lo, hi) = cfg.bounds.tau_d;
            it.next().unwrap().exp().clamp(lo, hi)
        } else {
            cfg.initial.tau_d
        };
        let phi0 = if cfg.is_free(FitParam::Phi0) {
            let (lo, hi) = cfg.bounds.phi0;
            it.next().unwrap().clamp(lo, hi)
        } else {
            cfg.initial.phi0
        };
        (tau_d, phi0)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (tau_d, phi0) = self.decode(x);
        self.profile(tau_d, phi0).map(|r| r.0).unwrap_or(f64::INFINITY)
    }
}

/// Outcome of one multistart run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub tau_d_start: f64,
    pub phi0_start: f64,
    pub tau_d: f64,
    pub phi0: f64,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BeatParams,
    pub chi2: f64,
    pub dof: i64,
    /// Order of the covariance rows and columns.
    pub covariance_params: Vec<FitParam>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub message: String,
    /// 1 / tau_d at the optimum, when tau_d is free.
    pub inv_tau_d: Option<f64>,
    /// Value of 1 / tau_d above the optimum where chi2 has risen by 4 (about 2 sigma).
    pub inv_tau_d_upper: Option<f64>,
    pub starts: Vec<StartReport>,
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead with standard coefficients. Stops when the relative chi2 spread
/// drops below `ftol` or the simplex shrinks below `xtol` in every coordinate.
fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    max_iters: usize,
    ftol: f64,
    xtol: f64,
) -> Simplex {
    let n = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = (0..n)
            .map(|j| pts.iter().map(|p| (p[j] - pts[0][j]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= ftol * vals[0].abs().max(f64::MIN_POSITIVE) || size <= xtol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect()
        };
        let reflected = along(-1.0);
        let f_r = f(&reflected);
        if f_r < vals[0] {
            let expanded = along(-2.0);
            let f_e = f(&expanded);
            if f_e < f_r {
                pts[n] = expanded;
                vals[n] = f_e;
            } else {
                pts[n] = reflected;
                vals[n] = f_r;
            }
        } else if f_r < vals[n - 1] {
            pts[n] = reflected;
            vals[n] = f_r;
        } else {
            let (contracted, f_c) = if f_r < vals[n] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if f_c < vals[n].min(f_r) {
                pts[n] = contracted;
                vals[n] = f_c;
            } else {
                for i in 1..=n {
                    for j in 0..n {
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    }
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best_index = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Simplex {
        best: pts[best_index].clone(),
        value: vals[best_index],
        iterations,
        converged,
    }
}

/// Fits a count series.
pub fn fit_beat(series: &CountSeries, cfg: &FitConfig) -> Result<FitResult> {
    fit_series(&FitSeries::from_counts(series)?, cfg)
}

/// Fits a gamma / K-alpha ratio series; the fitted n0 is relative to the K-alpha scale.
pub fn fit_ratio(series: &RatioSeries, cfg: &FitConfig) -> Result<FitResult> {
    fit_series(&FitSeries::from_ratio(series)?, cfg)
}

pub fn fit_series(series: &FitSeries, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(Error::structure("cannot fit an empty series"));
    }
    let problem = Problem { series, cfg };
    let tau_free = cfg.is_free(FitParam::TauD);
    let phi_free = cfg.is_free(FitParam::Phi0);

    let phase_starts: Vec<f64> = if phi_free {
        let (lo, hi) = cfg.bounds.phi0;
        (0..cfg.phase_grid)
            .map(|j| lo + (hi - lo) * j as f64 / cfg.phase_grid as f64)
            .collect()
    } else {
        vec![cfg.initial.phi0]
    };

    let mut starts: Vec<StartReport> = phase_starts
        .par_iter()
        .map(|&phi_start| run_start(&problem, phi_start))
        .collect::<Result<Vec<_>>>()?;

    // lowest chi2; near-ties broken by the smaller tau_d
    let best_index = (0..starts.len())
        .min_by(|&a, &b| {
            let (sa, sb) = (&starts[a], &starts[b]);
            let tie = (sa.chi2 - sb.chi2).abs() <= 1e-12 * sa.chi2.abs().max(sb.chi2.abs());
            if tie {
                sa.tau_d.total_cmp(&sb.tau_d)
            } else {
                sa.chi2.total_cmp(&sb.chi2)
            }
        })
        .unwrap();
    let best = starts[best_index].clone();
    let (chi2, linear) = problem.profile(best.tau_d, best.phi0)?;
    let mut params = problem.params(best.tau_d, best.phi0);
    params.n0 = linear[0];
    params.background = linear[1];
    params.phi0 = reduce_phase(params.phi0);

    let covariance_params: Vec<FitParam> =
        FitParam::ALL.into_iter().filter(|p| cfg.is_free(*p)).collect();
    let (covariance, cov_note) = covariance(&problem, &params, &covariance_params)?;

    let (inv_tau_d, inv_tau_d_upper) = if tau_free {
        let upper = inverse_tau_d_upper(&problem, &params, chi2)?;
        (Some(1.0 / params.tau_d), Some(upper))
    } else {
        (None, None)
    };

    let converged = starts.iter().any(|s| s.converged) && chi2.is_finite();
    let mut message = if converged {
        format!("best of {} starts (start {})", starts.len(), best_index)
    } else {
        format!("no start converged in {} iterations", cfg.max_iters)
    };
    if !tau_free && !phi_free {
        message = "linear parameters solved exactly".to_string();
    }
    if let Some(note) = cov_note {
        message.push_str("; ");
        message.push_str(&note);
    }
    for s in &mut starts {
        s.phi0 = reduce_phase(s.phi0);
    }
    Ok(FitResult {
        params,
        chi2,
        dof: series.len() as i64 - covariance_params.len() as i64,
        covariance_params,
        covariance,
        converged: converged || (!tau_free && !phi_free),
        message,
        inv_tau_d,
        inv_tau_d_upper,
        starts,
    })
}

fn run_start(problem: &Problem<'_>, phi_start: f64) -> Result<StartReport> {
    let cfg = problem.cfg;
    let tau_free = cfg.is_free(FitParam::TauD);
    let phi_free = cfg.is_free(FitParam::Phi0);

    let tau_start = if tau_free {
        let (lo, hi) = cfg.bounds.tau_d;
        let n = cfg.tau_d_grid;
        let grid: Vec<f64> = (0..n)
            .map(|i| {
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                (lo.ln() + frac * (hi.ln() - lo.ln())).exp()
            })
            .collect();
        let mut best = (f64::INFINITY, grid[0]);
        for tau in grid {
            let c = problem.profile(tau, phi_start)?.0;
            if c < best.0 {
                best = (c, tau);
            }
        }
        best.1
    } else {
        cfg.initial.tau_d
    };

    if !tau_free && !phi_free {
        let chi2 = problem.profile(tau_start, phi_start)?.0;
        return Ok(StartReport {
            tau_d_start: tau_start,
            phi0_start: phi_start,
            tau_d: tau_start,
            phi0: phi_start,
            chi2,
            iterations: 0,
            converged: true,
        });
    }

    let mut x0 = Vec::new();
    let mut steps = Vec::new();
    if tau_free {
        x0.push(tau_start.ln());
        steps.push(0.1);
    }
    if phi_free {
        x0.push(phi_start);
        steps.push(0.1);
    }
    let f = |x: &[f64]| problem.objective(x);
    let first = nelder_mead(f, &x0, &steps, cfg.max_iters, cfg.tolerance, 1e-10);
    // restart from the best vertex to shake off a collapsed simplex
    let small: Vec<f64> = steps.iter().map(|s| 0.1 * s).collect();
    let second = nelder_mead(f, &first.best, &small, cfg.max_iters, cfg.tolerance, 1e-10);
    let last = if second.value <= first.value { &second } else { &first };
    let (tau_d, phi0) = problem.decode(&last.best);
    Ok(StartReport {
        tau_d_start: tau_start,
        phi0_start: phi_start,
        tau_d,
        phi0,
        chi2: last.value,
        iterations: first.iterations + second.iterations,
        converged: first.converged && second.converged,
    })
}

/// chi2 at arbitrary parameter values, without bounds or validation of the linear part.
fn raw_chi2(problem: &Problem<'_>, p: &BeatParams) -> Result<f64> {
    let d = design(problem.series, p, problem.cfg.kernel)?;
    Ok(weighted_chi2(&d, p.n0, p.background))
}

/// Covariance 2 H^{-1} from a central-difference Hessian of chi2. Flat or
/// negative-curvature directions are dropped (pseudo-inverse) so the result is
/// always positive semidefinite.
fn covariance(
    problem: &Problem<'_>,
    best: &BeatParams,
    params: &[FitParam],
) -> Result<(Vec<Vec<f64>>, Option<String>)> {
    let k = params.len();
    if k == 0 {
        return Ok((Vec::new(), None));
    }
    let steps: Vec<f64> = params
        .iter()
        .map(|&p| {
            let v = p.get(best);
            match p {
                FitParam::Phi0 => 1e-4,
                FitParam::TauD => 1e-4 * v,
                _ => 1e-4 * v.abs().max(1e-3),
            }
        })
        .collect();
    let eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut p = *best;
        for &(i, s) in shifts {
            let param = params[i];
            let v = param.get(&p) + s * steps[i];
            param.set(&mut p, v);
        }
        raw_chi2(problem, &p)
    };
    let f0 = eval(&[])?;
    let mut h = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let fp = eval(&[(i, 1.0)])?;
        let fm = eval(&[(i, -1.0)])?;
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in 0..i {
            let fpp = eval(&[(i, 1.0), (j, 1.0)])?;
            let fpm = eval(&[(i, 1.0), (j, -1.0)])?;
            let fmp = eval(&[(i, -1.0), (j, 1.0)])?;
            let fmm = eval(&[(i, -1.0), (j, -1.0)])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let max_ev = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut dropped = 0;
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev <= 1e-12 * max_ev || ev <= 0.0 {
            dropped += 1;
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        cov += (v * v.transpose()) * (2.0 / ev);
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let rows = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();
    let note = (dropped > 0).then(|| {
        format!("covariance is a pseudo-inverse ({dropped} flat direction(s) dropped)")
    });
    Ok((rows, note))
}

/// Walks 1/tau_d upward from the optimum, re-solving the linear parameters,
/// until chi2 has risen by 4; the crossing is refined by bisection.
fn inverse_tau_d_upper(problem: &Problem<'_>, best: &BeatParams, chi2_min: f64) -> Result<f64> {
    let (tau_lo, _) = problem.cfg.bounds.tau_d;
    let s_max = 1.0 / tau_lo;
    let s0 = 1.0 / best.tau_d;
    let rise = |s: f64| -> Result<f64> {
        Ok(problem.profile(1.0 / s, best.phi0)?.0 - chi2_min - 4.0)
    };
    let mut step = (s0 * 1e-3).max(s_max * 1e-12);
    let mut lo = s0;
    let mut hi = (s0 + step).min(s_max);
    while rise(hi)? < 0.0 {
        if hi >= s_max {
            return Ok(s_max);
        }
        lo = hi;
        step *= 2.0;
        hi = (s0 + step).min(s_max);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rise(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
