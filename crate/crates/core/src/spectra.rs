//! Binned gamma and K-alpha count series: synthetic generation, normalisation
//! and rebinning.
//!
//! The gamma channel follows the pump-accumulated beat model. The K-alpha
//! channel tracks the same Mossbauer population without a beat, so it is the
//! accumulated pure exponential. Detector efficiency and solid angle are folded
//! into `n0` and `kalpha_scale`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beat::{bin_shape_integrals, BeatKernel, BeatParams};
use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::quadrature::QuadSettings;

/// Relative slack allowed between one bin's end and the next bin's start.
pub const CONTIGUITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Gamma,
    Kalpha,
}

impl Channel {
    /// Detector energy window in keV: 1 keV around the Mossbauer line for gammas,
    /// 2 keV around Rh K-alpha.
    pub fn default_window(self) -> (f64, f64) {
        match self {
            Channel::Gamma => (39.5, 40.5),
            Channel::Kalpha => (19.2, 21.2),
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Channel::Gamma => 1 << 40,
            Channel::Kalpha => 2 << 40,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Gamma => "gamma",
            Channel::Kalpha => "kalpha",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Channel::Gamma),
            "kalpha" => Ok(Channel::Kalpha),
            other => Err(Error::structure(format!("unknown channel label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub t_start: f64,
    pub width: f64,
    pub counts: u64,
}

impl Bin {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.width
    }
}

/// Checks that bins are sorted, contiguous and non-overlapping.
/// On failure returns the index of the first offending bin and a description.
pub fn check_layout<I>(bins: I) -> std::result::Result<(), (usize, String)>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut prev_end: Option<f64> = None;
    for (i, (t_start, width)) in bins.into_iter().enumerate() {
        if !(t_start.is_finite() && t_start >= 0.0) {
            return Err((i, format!("bin start {t_start} must be finite and >= 0")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err((i, format!("bin width {width} must be finite and > 0")));
        }
        if let Some(end) = prev_end {
            let gap = t_start - end;
            if gap.abs() > CONTIGUITY_TOL * end.abs().max(width) {
                let what = if gap < 0.0 { "overlaps" } else { "leaves a gap after" };
                return Err((
                    i,
                    format!("bin starting at {t_start} {what} the previous bin ending at {end}"),
                ));
            }
        }
        prev_end = Some(t_start + width);
    }
    Ok(())
}

/// Detector counts for one channel in contiguous time bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub channel: Channel,
    /// keV, metadata only.
    pub energy_window: (f64, f64),
    pub bins: Vec<Bin>,
}

impl CountSeries {
    pub fn new(channel: Channel, bins: Vec<Bin>) -> Result<Self> {
        check_layout(bins.iter().map(|b| (b.t_start, b.width)))
            .map_err(|(i, msg)| Error::structure(format!("bin {i}: {msg}")))?;
        Ok(Self {
            channel,
            energy_window: channel.default_window(),
            bins,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Poisson standard deviation sqrt(counts) of each bin.
    pub fn errors(&self) -> Vec<f64> {
        self.bins.iter().map(|b| (b.counts as f64).sqrt()).collect()
    }

    pub fn total_counts(&self) -> u64 {
        self.bins.iter().map(|b| b.counts).sum()
    }

    /// (t_start, width) of every bin.
    pub fn layout(&self) -> Vec<(f64, f64)> {
        self.bins.iter().map(|b| (b.t_start, b.width)).collect()
    }

    /// Same series with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bins {
            b.counts *= factor;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBin {
    pub t_start: f64,
    pub width: f64,
    pub ratio: f64,
    pub sigma: f64,
    /// False when the K-alpha bin is empty; ratio and sigma are NaN then.
    pub valid: bool,
    /// True when the gamma bin is empty.
    pub low_count: bool,
}

/// Gamma counts divided by K-alpha counts, bin by bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub bins: Vec<RatioBin>,
}

impl RatioSeries {
    pub fn new(bins: Vec<RatioBin>) -> Result<Self> {
        check_layout(bins.iter().map(|b| (b.t_start, b.width)))
            .map_err(|(i, msg)| Error::structure(format!("bin {i}: {msg}")))?;
        Ok(Self { bins })
    }
}

/// Uniform bins of `width` seconds from t = 0 up to `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub width: f64,
    pub horizon: f64,
}

impl Binning {
    /// Bin layout; a trailing partial bin is dropped with a warning.
    pub fn layout(&self) -> Result<Vec<(f64, f64)>> {
        require_positive("bin width", self.width)?;
        require_non_negative("horizon", self.horizon)?;
        let exact = self.horizon / self.width;
        let mut n = exact.floor() as usize;
        if exact - (n as f64) > 1.0 - 1e-9 {
            n += 1;
        } else if exact - (n as f64) > 1e-9 {
            log::warn!(
                "horizon {} s is not a multiple of the bin width {} s; dropping the last partial bin",
                self.horizon,
                self.width
            );
        }
        Ok((0..n).map(|i| (i as f64 * self.width, self.width)).collect())
    }
}

/// Expected K-alpha counts in [t_start, t_start + width] for a beat-free accumulated
/// exponential with rate scale `kalpha_scale`.
pub fn kalpha_bin_expectation(kalpha_scale: f64, tau0: f64, t_pump: f64, t_start: f64, width: f64) -> f64 {
    let pump = -(-t_pump / tau0).exp_m1();
    let bin = -(-width / tau0).exp_m1();
    kalpha_scale * tau0 * tau0 * pump * bin * (-t_start / tau0).exp()
}

/// Expected gamma and K-alpha counts for every bin of `layout`.
pub fn expected_counts(
    beat: &BeatParams,
    kalpha_scale: f64,
    layout: &[(f64, f64)],
    kernel: BeatKernel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    beat.validate()?;
    require_non_negative("kalpha_scale", kalpha_scale)?;
    let shapes = bin_shape_integrals(beat, layout, kernel, &QuadSettings::default())?;
    let gamma = shapes
        .iter()
        .zip(layout)
        .map(|(a, &(_, w))| beat.n0 * a + beat.background * beat.t_pump * w)
        .collect();
    let kalpha = layout
        .iter()
        .map(|&(t, w)| kalpha_bin_expectation(kalpha_scale, beat.tau0, beat.t_pump, t, w))
        .collect();
    Ok((gamma, kalpha))
}

/// Poisson realisation of `expected`, one independent ChaCha stream per bin.
pub fn poisson_counts(expected: &[f64], seed: u64, channel: Channel) -> Result<Vec<u64>> {
    expected
        .par_iter()
        .enumerate()
        .map(|(i, &mean)| {
            if !(mean.is_finite() && mean >= 0.0) {
                return Err(Error::domain(format!("bin {i} has invalid expectation {mean}")));
            }
            if mean == 0.0 {
                return Ok(0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(channel.stream_tag() | i as u64);
            let poisson = Poisson::new(mean)
                .map_err(|e| Error::domain(format!("bin {i}: {e}")))?;
            Ok(poisson.sample(&mut rng) as u64)
        })
        .collect()
}

/// Synthetic gamma and K-alpha series for the given model, binning and seed.
pub fn simulate_counts(
    beat: &BeatParams,
    kalpha_scale: f64,
    binning: &Binning,
    seed: u64,
) -> Result<(CountSeries, CountSeries)> {
    simulate_counts_with(beat, kalpha_scale, binning, seed, BeatKernel::Cos2)
}

pub fn simulate_counts_with(
    beat: &BeatParams,
    kalpha_scale: f64,
    binning: &Binning,
    seed: u64,
    kernel: BeatKernel,
) -> Result<(CountSeries, CountSeries)> {
    let layout = binning.layout()?;
    let (gamma_mean, kalpha_mean) = expected_counts(beat, kalpha_scale, &layout, kernel)?;
    let build = |channel: Channel, means: &[f64]| -> Result<CountSeries> {
        let counts = poisson_counts(means, seed, channel)?;
        let bins = layout
            .iter()
            .zip(counts)
            .map(|(&(t_start, width), counts)| Bin { t_start, width, counts })
            .collect();
        CountSeries::new(channel, bins)
    };
    Ok((build(Channel::Gamma, &gamma_mean)?, build(Channel::Kalpha, &kalpha_mean)?))
}

/// Bin-by-bin ratio gamma / K-alpha with sigma = ratio sqrt(1/g + 1/k).
///
/// An empty K-alpha bin is marked invalid. An empty gamma bin gives ratio 0 and
/// sigma 1/k (one count of Poisson uncertainty) and is flagged as low-count.
pub fn normalize(gamma: &CountSeries, kalpha: &CountSeries) -> Result<RatioSeries> {
    if gamma.len() != kalpha.len() {
        return Err(Error::structure(format!(
            "binning mismatch: {} gamma bins vs {} K-alpha bins",
            gamma.len(),
            kalpha.len()
        )));
    }
    let mut bins = Vec::with_capacity(gamma.len());
    for (i, (g, k)) in gamma.bins.iter().zip(&kalpha.bins).enumerate() {
        let tol = CONTIGUITY_TOL * g.t_end().abs().max(1.0);
        if (g.t_start - k.t_start).abs() > tol || (g.width - k.width).abs() > tol {
            return Err(Error::structure(format!(
                "binning mismatch at bin {i}: [{}, +{}] vs [{}, +{}]",
                g.t_start, g.width, k.t_start, k.width
            )));
        }
        let (gc, kc) = (g.counts as f64, k.counts as f64);
        let (ratio, sigma, valid) = if k.counts == 0 {
            (f64::NAN, f64::NAN, false)
        } else if g.counts == 0 {
            (0.0, 1.0 / kc, true)
        } else {
            let r = gc / kc;
            (r, r * (1.0 / gc + 1.0 / kc).sqrt(), true)
        };
        bins.push(RatioBin {
            t_start: g.t_start,
            width: g.width,
            ratio,
            sigma,
            valid,
            low_count: g.counts == 0,
        });
    }
    Ok(RatioSeries { bins })
}

/// Sums counts over groups of `factor` consecutive bins. A trailing partial
/// group is dropped with a warning.
pub fn rebin(series: &CountSeries, factor: usize) -> Result<CountSeries> {
    if factor == 0 {
        return Err(Error::domain("rebin factor must be at least 1"));
    }
    let remainder = series.len() % factor;
    if remainder != 0 {
        log::warn!(
            "rebin by {factor}: dropping {remainder} trailing bins of {}",
            series.len()
        );
    }
    let bins = series
        .bins
        .chunks_exact(factor)
        .map(|group| Bin {
            t_start: group[0].t_start,
            width: group.iter().map(|b| b.width).sum(),
            counts: group.iter().map(|b| b.counts).sum(),
        })
        .collect();
    Ok(CountSeries {
        channel: series.channel,
        energy_window: series.energy_window,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beat() -> BeatParams {
        BeatParams {
            n0: 0.05,
            tau0: 4857.0,
            tau_d: 4857.0,
            phi0: 0.3,
            t_pump: 3600.0,
            background: 0.0,
        }
    }

    fn series(channel: Channel, counts: &[u64]) -> CountSeries {
        let bins = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| Bin { t_start: 60.0 * i as f64, width: 60.0, counts: c })
            .collect();
        CountSeries::new(channel, bins).unwrap()
    }

    #[test]
    fn zero_model_gives_zero_counts() {
        let mut b = beat();
        b.n0 = 0.0;
        let (g, k) = simulate_counts(&b, 0.1, &Binning { width: 360.0, horizon: 7200.0 }, 4).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.total_counts(), 0);
        assert!(k.total_counts() > 0);
    }

    #[test]
    fn partial_bin_is_dropped() {
        let layout = Binning { width: 360.0, horizon: 1000.0 }.layout().unwrap();
        assert_eq!(layout.len(), 2);
        assert!(Binning { width: 0.0, horizon: 1000.0 }.layout().is_err());
    }

    #[test]
    fn kalpha_expectation_matches_quadrature() {
        let (scale, tau0, tp, t0, w) = (3.0, 4857.0, 1800.0, 250.0, 360.0);
        let inner = |t: f64| tau0 * ((-t / tau0).exp() - (-(t + tp) / tau0).exp());
        let direct = crate::quadrature::integrate(inner, t0, t0 + w, &QuadSettings::default())
            .unwrap()
            .value;
        assert_relative_eq!(
            kalpha_bin_expectation(scale, tau0, tp, t0, w),
            scale * direct,
            max_relative = 1e-12
        );
    }

    #[test]
    fn seeded_realisations_are_reproducible() {
        let binning = Binning { width: 60.0, horizon: 3600.0 };
        let a = simulate_counts(&beat(), 0.2, &binning, 7).unwrap();
        let b = simulate_counts(&beat(), 0.2, &binning, 7).unwrap();
        let c = simulate_counts(&beat(), 0.2, &binning, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        assert_eq!(a.0.channel, Channel::Gamma);
        assert_eq!(a.1.channel, Channel::Kalpha);
    }

    #[test]
    fn normalize_examples() {
        let g = series(Channel::Gamma, &[100, 0, 5]);
        let k = series(Channel::Kalpha, &[1000, 50, 0]);
        let r = normalize(&g, &k).unwrap();
        assert_relative_eq!(r.bins[0].ratio, 0.1);
        assert_relative_eq!(r.bins[0].sigma, 0.1 * (0.01f64 + 0.001).sqrt(), max_relative = 1e-15);
        assert!((r.bins[0].sigma - 0.0105).abs() < 1e-4);
        assert_eq!(r.bins[1].ratio, 0.0);
        assert_relative_eq!(r.bins[1].sigma, 1.0 / 50.0);
        assert!(r.bins[1].low_count && r.bins[1].valid);
        assert!(!r.bins[2].valid);
        assert!(r.bins[2].ratio.is_nan());

        let same = normalize(&g, &g).unwrap();
        assert_eq!(same.bins[0].ratio, 1.0);
        assert_eq!(same.bins[2].ratio, 1.0);
    }

    #[test]
    fn normalize_rejects_mismatched_binning() {
        let g = series(Channel::Gamma, &[1, 2, 3]);
        let k = series(Channel::Kalpha, &[1, 2]);
        assert!(matches!(normalize(&g, &k), Err(Error::Structure(_))));
        let mut shifted = series(Channel::Kalpha, &[1, 2, 3]);
        for b in &mut shifted.bins {
            b.t_start += 1.0;
        }
        assert!(matches!(normalize(&g, &shifted), Err(Error::Structure(_))));
    }

    #[test]
    fn rebin_examples() {
        let s = series(Channel::Gamma, &[1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(rebin(&s, 1).unwrap(), s);
        let r = rebin(&s, 3).unwrap();
        assert_eq!(r.bins.iter().map(|b| b.counts).collect::<Vec<_>>(), vec![6, 15]);
        assert_eq!(r.bins[1].t_start, 180.0);
        assert_eq!(r.bins[1].width, 180.0);
        assert!(rebin(&s, 0).is_err());
        assert_eq!(rebin(&s, 8).unwrap().len(), 0);
    }

    #[test]
    fn layout_checks() {
        let overlap = vec![
            Bin { t_start: 0.0, width: 60.0, counts: 1 },
            Bin { t_start: 30.0, width: 60.0, counts: 1 },
        ];
        let err = CountSeries::new(Channel::Gamma, overlap).unwrap_err().to_string();
        assert!(err.contains("bin 1") && err.contains("overlaps"), "{err}");
        let gap = vec![
            Bin { t_start: 0.0, width: 60.0, counts: 1 },
            Bin { t_start: 90.0, width: 60.0, counts: 1 },
        ];
        assert!(CountSeries::new(Channel::Gamma, gap).is_err());
        assert!(CountSeries::new(Channel::Gamma, Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn channel_labels() {
        assert_eq!("gamma".parse::<Channel>().unwrap(), Channel::Gamma);
        assert_eq!(Channel::Kalpha.to_string(), "kalpha");
        assert!("xray".parse::<Channel>().is_err());
    }
}
