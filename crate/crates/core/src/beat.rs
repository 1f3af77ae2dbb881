//! Dynamic-beat model of the resonant Mossbauer decay.
//!
//! Count rate: n0 e^{-t/tau0} cos^2(sqrt(t/tau_d) + phi0) + background.
//! A sample pumped over [-T_p, 0] shows the incoherent accumulation
//! I(t) = n0 int_t^{t+T_p} e^{-s/tau0} cos^2(sqrt(s/tau_d) + phi0) ds.
//!
//! The background term is not part of the physical model; it defaults to zero
//! and exists so that synthetic data with a detector floor can be fitted.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadSettings};
use crate::special::bessel_j0;

/// Parameters of the count-rate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatParams {
    /// Initial count-rate scale, counts/s.
    pub n0: f64,
    /// Lifetime of the Mossbauer level, s.
    pub tau0: f64,
    /// Beat time constant, s. `+inf` switches the beat off.
    pub tau_d: f64,
    /// Beat phase, rad.
    pub phi0: f64,
    /// Pump duration, s.
    pub t_pump: f64,
    /// Constant background rate, counts/s.
    #[serde(default)]
    pub background: f64,
}

impl BeatParams {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("n0", self.n0)?;
        require_positive("tau0", self.tau0)?;
        if self.tau_d.is_nan() || self.tau_d <= 0.0 {
            return Err(Error::domain(format!("tau_d must be > 0, got {}", self.tau_d)));
        }
        if !self.phi0.is_finite() {
            return Err(Error::domain("phi0 must be finite"));
        }
        require_non_negative("t_pump", self.t_pump)?;
        require_non_negative("background", self.background)
    }

    /// Phase reduced into [0, pi), where the model is periodic.
    pub fn reduced_phase(&self) -> f64 {
        reduce_phase(self.phi0)
    }
}

/// Reduces a beat phase into [0, pi).
pub fn reduce_phase(phi0: f64) -> f64 {
    let r = phi0.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Time-dependence of the coherent forward signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatKernel {
    /// e^{-t/tau0} cos^2(sqrt(t/tau_d) + phi0).
    #[default]
    Cos2,
    /// e^{-t/tau0} J0^2(sqrt(t/tau_d)); the phase is ignored.
    BesselJ0Squared,
}

impl BeatKernel {
    /// Unscaled rate at time `t` (no n0, no background).
    pub fn shape(self, t: f64, p: &BeatParams) -> f64 {
        let decay = (-t / p.tau0).exp();
        let arg = (t / p.tau_d).sqrt();
        match self {
            BeatKernel::Cos2 => {
                let c = (arg + reduce_phase(p.phi0)).cos();
                decay * c * c
            }
            BeatKernel::BesselJ0Squared => {
                let j = bessel_j0(arg);
                decay * j * j
            }
        }
    }

    /// Values of sqrt(t) at which the oscillating factor vanishes, inside (lo, hi).
    fn nodes_in_sqrt_time(self, p: &BeatParams, lo: f64, hi: f64) -> Vec<f64> {
        if !p.tau_d.is_finite() {
            return Vec::new();
        }
        let root_tau_d = p.tau_d.sqrt();
        let first = match self {
            BeatKernel::Cos2 => FRAC_PI_2 - reduce_phase(p.phi0),
            BeatKernel::BesselJ0Squared => 0.75 * PI,
        };
        // u = root_tau_d * (first + m pi)
        let m_lo = ((lo / root_tau_d - first) / PI).ceil().max(0.0);
        let m_hi = ((hi / root_tau_d - first) / PI).floor();
        if !(m_hi >= m_lo) {
            return Vec::new();
        }
        let count = (m_hi - m_lo) as usize + 1;
        if count > MAX_NODES {
            return Vec::new();
        }
        (0..count)
            .map(|i| root_tau_d * (first + (m_lo + i as f64) * PI))
            .filter(|&u| u > lo && u < hi)
            .collect()
    }
}

/// Above this many oscillation nodes in one integral the nodes are not used as breakpoints.
const MAX_NODES: usize = 20_000;

/// Beat time constant tau_d = tau0 / (f_LM mu_n xi).
pub fn tau_d(tau0: f64, f_lm: f64, mu_n: f64, xi: f64) -> Result<f64> {
    require_positive("tau0", tau0)?;
    require_positive("f_LM", f_lm)?;
    require_positive("mu_n", mu_n)?;
    require_positive("xi", xi)?;
    Ok(tau0 / (f_lm * mu_n * xi))
}

/// Instantaneous count rate n0 e^{-t/tau0} cos^2(sqrt(t/tau_d) + phi0) + background.
pub fn count_rate(t: f64, p: &BeatParams) -> Result<f64> {
    count_rate_with(t, p, BeatKernel::Cos2)
}

pub fn count_rate_with(t: f64, p: &BeatParams, kernel: BeatKernel) -> Result<f64> {
    p.validate()?;
    require_non_negative("t", t)?;
    Ok(p.n0 * kernel.shape(t, p) + p.background)
}

/// Integrates `weight(s) * shape(s)` over [lo, hi] in the variable u = sqrt(s),
/// which removes the sqrt singularity at s = 0 and makes the beat periodic.
fn integrate_shape(
    p: &BeatParams,
    kernel: BeatKernel,
    time_breaks: &[f64],
    weight: impl Fn(f64) -> f64,
    settings: &QuadSettings,
) -> Result<f64> {
    let u_lo = time_breaks[0].sqrt();
    let u_hi = time_breaks[time_breaks.len() - 1].sqrt();
    let mut breaks: Vec<f64> = time_breaks.iter().map(|t| t.sqrt()).collect();
    breaks.extend(kernel.nodes_in_sqrt_time(p, u_lo, u_hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let settings = QuadSettings {
        max_subintervals: settings.max_subintervals.max(4 * breaks.len()),
        ..*settings
    };
    let integrand = |u: f64| {
        let s = u * u;
        2.0 * u * weight(s) * kernel.shape(s, p)
    };
    Ok(integrate_with_breaks(integrand, &breaks, &settings)?.value)
}

/// Pump-accumulated intensity I(t) for the cos^2 kernel at the default tolerance.
pub fn accumulated_intensity(t: f64, p: &BeatParams) -> Result<f64> {
    accumulated_intensity_with(t, p, BeatKernel::Cos2, &QuadSettings::default())
}

/// I(t) = n0 int_t^{t+T_p} shape(s) ds + background T_p.
pub fn accumulated_intensity_with(
    t: f64,
    p: &BeatParams,
    kernel: BeatKernel,
    settings: &QuadSettings,
) -> Result<f64> {
    p.validate()?;
    require_non_negative("t", t)?;
    require_positive("t_pump", p.t_pump)?;
    let integral = integrate_shape(p, kernel, &[t, t + p.t_pump], |_| 1.0, settings)?;
    Ok(p.n0 * integral + p.background * p.t_pump)
}

/// Accumulated intensity on a sorted, nonnegative time grid.
pub fn beat_curve(p: &BeatParams, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    beat_curve_with(p, t_grid, BeatKernel::Cos2, &QuadSettings::default())
}

pub fn beat_curve_with(
    p: &BeatParams,
    t_grid: &[f64],
    kernel: BeatKernel,
    settings: &QuadSettings,
) -> Result<Vec<(f64, f64)>> {
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::domain("time grid must be sorted"));
    }
    t_grid
        .par_iter()
        .map(|&t| Ok((t, accumulated_intensity_with(t, p, kernel, settings)?)))
        .collect()
}

/// Expected counts in the bin [t_start, t_start + width]: the time integral of I(t).
///
/// Swapping the order of integration turns the double integral into one
/// integral of the shape against the trapezoidal overlap weight
/// w(s) = |[s - T_p, s] cap [t_start, t_end]|.
pub fn bin_expectation(p: &BeatParams, t_start: f64, width: f64) -> Result<f64> {
    bin_expectation_with(p, t_start, width, BeatKernel::Cos2, &QuadSettings::default())
}

pub fn bin_expectation_with(
    p: &BeatParams,
    t_start: f64,
    width: f64,
    kernel: BeatKernel,
    settings: &QuadSettings,
) -> Result<f64> {
    Ok(p.n0 * bin_shape_integral(p, t_start, width, kernel, settings)?
        + p.background * p.t_pump * width)
}

/// Bin integral of I(t) for n0 = 1 and no background.
pub fn bin_shape_integral(
    p: &BeatParams,
    t_start: f64,
    width: f64,
    kernel: BeatKernel,
    settings: &QuadSettings,
) -> Result<f64> {
    p.validate()?;
    require_non_negative("t_start", t_start)?;
    require_positive("width", width)?;
    require_positive("t_pump", p.t_pump)?;
    let t_end = t_start + width;
    let t_pump = p.t_pump;
    let mut breaks = vec![t_start, t_end, t_start + t_pump, t_end + t_pump];
    breaks.sort_by(f64::total_cmp);
    let weight = move |s: f64| (s.min(t_end) - (s - t_pump).max(t_start)).max(0.0);
    integrate_shape(p, kernel, &breaks, weight, settings)
}

/// Bin integrals of I(t) (n0 = 1, no background) for a whole bin layout.
///
/// All bin edges, shifted and unshifted by T_p, form one node grid. On each node
/// interval the zeroth and first moments of the shape are integrated once; every
/// overlap weight is linear between nodes, so each bin is a short sum of moments.
pub fn bin_shape_integrals(
    p: &BeatParams,
    layout: &[(f64, f64)],
    kernel: BeatKernel,
    settings: &QuadSettings,
) -> Result<Vec<f64>> {
    p.validate()?;
    require_positive("t_pump", p.t_pump)?;
    for &(t, w) in layout {
        require_non_negative("t_start", t)?;
        require_positive("width", w)?;
    }
    if layout.is_empty() {
        return Ok(Vec::new());
    }
    let t_pump = p.t_pump;
    let mut nodes: Vec<f64> = layout
        .iter()
        .flat_map(|&(t, w)| [t, t + w, t + t_pump, t + w + t_pump])
        .collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    // (zeroth moment, first moment about the interval centre)
    let moments = nodes
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let center = 0.5 * (a + b);
            let m0 = integrate_shape(p, kernel, &[a, b], |_| 1.0, settings)?;
            let first = QuadSettings {
                abs_tol: settings.abs_tol.max(settings.rel_tol * m0.abs() * (b - a)),
                ..*settings
            };
            let m1 = integrate_shape(p, kernel, &[a, b], |s| s - center, &first)?;
            Ok((m0, m1))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let out = layout
        .par_iter()
        .map(|&(t_start, width)| {
            let t_end = t_start + width;
            let weight = |s: f64| (s.min(t_end) - (s - t_pump).max(t_start)).max(0.0);
            let first = nodes.partition_point(|&x| x < t_start);
            let mut total = 0.0;
            for j in first..nodes.len() - 1 {
                let (a, b) = (nodes[j], nodes[j + 1]);
                if a >= t_end + t_pump {
                    break;
                }
                let (wa, wb) = (weight(a), weight(b));
                let slope = (wb - wa) / (b - a);
                total += 0.5 * (wa + wb) * moments[j].0 + slope * moments[j].1;
            }
            total
        })
        .collect();
    Ok(out)
}

/// Times of the first `count` local minima of the cos^2 count rate with t > 0.
///
/// Minima are bracketed by a sign change of the rate derivative on a grid that
/// is uniform in sqrt(t) and then bisected to full precision.
pub fn rate_minima(p: &BeatParams, count: usize) -> Result<Vec<f64>> {
    p.validate()?;
    require_positive("n0", p.n0)?;
    if !p.tau_d.is_finite() {
        return Err(Error::domain("the rate has no beat minima when tau_d is infinite"));
    }
    let phi = p.phi0;
    let tau_d = p.tau_d;
    let tau0 = p.tau0;
    // derivative of the rate is -n0 e^{-t/tau0} h(t)
    let h = |t: f64| {
        let s = (t / tau_d).sqrt() + phi;
        let (sin, cos) = s.sin_cos();
        cos * (cos / tau0 + sin / (t * tau_d).sqrt())
    };
    let root_tau_d = tau_d.sqrt();
    let du = root_tau_d * PI / 256.0;
    let mut minima = Vec::with_capacity(count);
    let mut u_prev = du * 1e-3;
    let mut h_prev = h(u_prev * u_prev);
    let mut step = 1usize;
    while minima.len() < count {
        let u = step as f64 * du;
        step += 1;
        if step > 256 * (count + 8) * 4 + 1_000_000 {
            return Err(Error::domain("no further beat minima found"));
        }
        let t = u * u;
        let h_now = h(t);
        if h_prev > 0.0 && h_now <= 0.0 {
            let (mut a, mut b) = (u_prev * u_prev, t);
            loop {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if h(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            minima.push(if p.n0 * h(a).abs() <= p.n0 * h(b).abs() { a } else { b });
        }
        u_prev = u;
        h_prev = h_now;
    }
    Ok(minima)
}
