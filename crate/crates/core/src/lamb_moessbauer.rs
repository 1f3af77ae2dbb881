//! Entangled Lamb-Mossbauer factor of the tri-gamma mode.
//!
//! The phase factor of the three photons at displacement r is
//! S(r) = sum_n e^{i k_n . r}. Two readings of the ensemble average are offered:
//! coherent |<S>|^2 (the usual Lamb-Mossbauer definition, the default) and
//! incoherent <|S|^2>. They differ once the displacements have a transverse
//! spread: for large isotropic spread the coherent value goes to 0 and the
//! incoherent one to 3.

use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, Error, Result};
use crate::lattice::{TriGammaGeometry, Vec3};

/// Number of batches used for the batch-means standard error.
pub const BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplacementModel {
    /// Gaussian displacement along the channel axis only.
    LongitudinalGaussian,
    /// Independent Gaussian displacement on all three axes.
    IsotropicGaussian,
    /// A fixed list of displacement vectors.
    ExplicitSamples,
}

/// Ensemble of atomic displacements for the Lamb-Mossbauer average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementEnsemble {
    pub model: DisplacementModel,
    /// RMS displacement per active axis, m.
    #[serde(default)]
    pub sigma: f64,
    /// Displacements for the explicit model, m.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<[f64; 3]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

fn default_n_samples() -> usize {
    1_000_000
}

impl DisplacementEnsemble {
    pub fn longitudinal(sigma: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            model: DisplacementModel::LongitudinalGaussian,
            sigma,
            samples: Vec::new(),
            seed,
            n_samples,
        }
    }

    pub fn isotropic(sigma: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            model: DisplacementModel::IsotropicGaussian,
            ..Self::longitudinal(sigma, n_samples, seed)
        }
    }

    pub fn explicit(samples: Vec<[f64; 3]>) -> Self {
        let n_samples = samples.len();
        Self {
            model: DisplacementModel::ExplicitSamples,
            sigma: 0.0,
            samples,
            seed: 0,
            n_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_non_negative("sigma", self.sigma)?;
        match self.model {
            DisplacementModel::ExplicitSamples => {
                if self.samples.is_empty() {
                    return Err(Error::domain("explicit ensemble needs at least one sample"));
                }
                if self.samples.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::domain("explicit samples must be finite"));
                }
            }
            _ => {
                if self.n_samples == 0 {
                    return Err(Error::domain("n_samples must be at least 1"));
                }
            }
        }
        Ok(())
    }

    fn len(&self) -> usize {
        match self.model {
            DisplacementModel::ExplicitSamples => self.samples.len(),
            _ => self.n_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    Coherent,
    Incoherent,
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpretation::Coherent => "coherent",
            Interpretation::Incoherent => "incoherent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlmResult {
    pub value: f64,
    /// Monte Carlo standard error; `None` when too few batches were filled.
    pub stderr: Option<f64>,
    pub interpretation: Interpretation,
}

/// Contiguous index ranges of the batches; the first `len % BATCHES` batches get one extra.
fn batch_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / BATCHES;
    let extra = len % BATCHES;
    let mut start = 0;
    (0..BATCHES)
        .map(|b| {
            let size = base + usize::from(b < extra);
            let range = start..start + size;
            start += size;
            range
        })
        .filter(|r| !r.is_empty())
        .collect()
}

/// Per-batch sums of S(r) and |S(r)|^2. Each batch draws from its own ChaCha stream,
/// so results do not depend on how batches are scheduled.
fn batch_sums(geom: &TriGammaGeometry, ens: &DisplacementEnsemble) -> Vec<(usize, Complex64, f64)> {
    let ks = geom.k_vectors;
    let phase_sum = move |r: &Vec3| -> Complex64 {
        ks.iter()
            .map(|k| Complex64::from_polar(1.0, k.dot(r)))
            .sum()
    };
    batch_ranges(ens.len())
        .into_par_iter()
        .enumerate()
        .map(|(b, range)| {
            let n = range.len();
            let mut sum = Complex64::new(0.0, 0.0);
            let mut sum_sq = 0.0;
            let mut accumulate = |r: Vec3| {
                let s = phase_sum(&r);
                sum += s;
                sum_sq += s.norm_sqr();
            };
            match ens.model {
                DisplacementModel::ExplicitSamples => {
                    for v in &ens.samples[range] {
                        accumulate(Vec3::new(v[0], v[1], v[2]));
                    }
                }
                DisplacementModel::LongitudinalGaussian | DisplacementModel::IsotropicGaussian => {
                    let mut rng = ChaCha8Rng::seed_from_u64(ens.seed);
                    rng.set_stream(b as u64);
                    let isotropic = ens.model == DisplacementModel::IsotropicGaussian;
                    for _ in 0..n {
                        let mut draw = || -> f64 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            ens.sigma * z
                        };
                        let r = if isotropic {
                            let x = draw();
                            let y = draw();
                            Vec3::new(x, y, draw())
                        } else {
                            Vec3::new(0.0, 0.0, draw())
                        };
                        accumulate(r);
                    }
                }
            }
            (n, sum, sum_sq)
        })
        .collect()
}

fn sample_stddev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Coherent factor |<S>|^2 by Monte Carlo.
///
/// The standard error combines the linearised spread 2 Re(conj(m) m_b) of the
/// batch means m_b with the variance of the mean itself, which dominates when
/// <S> is close to zero.
pub fn flm_coherent_mc(geom: &TriGammaGeometry, ens: &DisplacementEnsemble) -> Result<FlmResult> {
    ens.validate()?;
    let batches = batch_sums(geom, ens);
    let total: usize = batches.iter().map(|b| b.0).sum();
    let mean = batches.iter().map(|b| b.1).sum::<Complex64>() / total as f64;
    let stderr = (batches.len() >= 2).then(|| {
        let means: Vec<Complex64> = batches.iter().map(|b| b.1 / b.0 as f64).collect();
        let projected: Vec<f64> = means.iter().map(|m| 2.0 * (mean.conj() * m).re).collect();
        let nb = means.len() as f64;
        let linear = sample_stddev(&projected) / nb.sqrt();
        let var_of_mean =
            means.iter().map(|m| (m - mean).norm_sqr()).sum::<f64>() / (nb - 1.0) / nb;
        (linear * linear + var_of_mean * var_of_mean).sqrt()
    });
    Ok(FlmResult {
        value: mean.norm_sqr(),
        stderr,
        interpretation: Interpretation::Coherent,
    })
}

/// Incoherent factor <|S|^2> by Monte Carlo, with a batch-means standard error.
pub fn flm_incoherent_mc(geom: &TriGammaGeometry, ens: &DisplacementEnsemble) -> Result<FlmResult> {
    ens.validate()?;
    let batches = batch_sums(geom, ens);
    let total: usize = batches.iter().map(|b| b.0).sum();
    let value = batches.iter().map(|b| b.2).sum::<f64>() / total as f64;
    let stderr = (batches.len() >= 2).then(|| {
        let means: Vec<f64> = batches.iter().map(|b| b.2 / b.0 as f64).collect();
        sample_stddev(&means) / (means.len() as f64).sqrt()
    });
    Ok(FlmResult {
        value,
        stderr,
        interpretation: Interpretation::Incoherent,
    })
}

/// Closed form 9 exp(-(k cos(theta) sigma)^2), exact for displacements along the channel.
pub fn flm_closed_form(geom: &TriGammaGeometry, sigma_longitudinal: f64) -> Result<FlmResult> {
    require_non_negative("sigma", sigma_longitudinal)?;
    let a = geom.k_longitudinal() * sigma_longitudinal;
    Ok(FlmResult {
        value: 9.0 * (-a * a).exp(),
        stderr: Some(0.0),
        interpretation: Interpretation::Coherent,
    })
}

pub fn flm_mc(
    geom: &TriGammaGeometry,
    ens: &DisplacementEnsemble,
    interpretation: Interpretation,
) -> Result<FlmResult> {
    match interpretation {
        Interpretation::Coherent => flm_coherent_mc(geom, ens),
        Interpretation::Incoherent => flm_incoherent_mc(geom, ens),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom() -> TriGammaGeometry {
        TriGammaGeometry::new(1.0, 0.6).unwrap()
    }

    #[test]
    fn frozen_lattice_gives_nine() {
        let g = geom();
        let ens = DisplacementEnsemble::isotropic(0.0, 1000, 3);
        let c = flm_coherent_mc(&g, &ens).unwrap();
        let i = flm_incoherent_mc(&g, &ens).unwrap();
        assert_relative_eq!(c.value, 9.0, max_relative = 1e-14);
        assert_relative_eq!(i.value, 9.0, max_relative = 1e-14);
        assert_eq!(flm_closed_form(&g, 0.0).unwrap().value, 9.0);
    }

    #[test]
    fn closed_form_at_unit_argument() {
        let g = geom();
        let sigma = 1.0 / g.k_longitudinal();
        assert_relative_eq!(
            flm_closed_form(&g, sigma).unwrap().value,
            9.0 * (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn longitudinal_mc_matches_closed_form() {
        let g = geom();
        let sigma = 1.0 / g.k_longitudinal();
        let ens = DisplacementEnsemble::longitudinal(sigma, 200_000, 11);
        let r = flm_coherent_mc(&g, &ens).unwrap();
        let expected = 9.0 * (-1.0f64).exp();
        assert!((r.value - expected).abs() <= 3.0 * r.stderr.unwrap(), "{r:?}");
        assert!((r.value - 3.311).abs() < 0.05);
    }

    #[test]
    fn isotropic_smearing_is_stronger_than_closed_form() {
        let g = geom();
        let sigma = 0.05 / g.k_mag;
        let ens = DisplacementEnsemble::isotropic(sigma, 200_000, 5);
        let r = flm_coherent_mc(&g, &ens).unwrap();
        let closed = flm_closed_form(&g, sigma).unwrap().value;
        assert!(r.value + 3.0 * r.stderr.unwrap() < closed, "{r:?} vs {closed}");
    }

    #[test]
    fn incoherent_limits() {
        let g = geom();
        let wide = 50.0 / g.k_mag;
        let iso = flm_incoherent_mc(&g, &DisplacementEnsemble::isotropic(wide, 200_000, 2)).unwrap();
        assert!((iso.value - 3.0).abs() <= 3.0 * iso.stderr.unwrap() + 1e-2, "{iso:?}");
        let lon = flm_incoherent_mc(&g, &DisplacementEnsemble::longitudinal(wide, 10_000, 2)).unwrap();
        assert_relative_eq!(lon.value, 9.0, max_relative = 1e-12);
        let coh = flm_coherent_mc(&g, &DisplacementEnsemble::isotropic(wide, 200_000, 2)).unwrap();
        assert!(coh.value < 1e-3);
    }

    #[test]
    fn jensen_ordering() {
        let g = geom();
        let ens = DisplacementEnsemble::isotropic(0.8, 50_000, 9);
        let c = flm_coherent_mc(&g, &ens).unwrap();
        let i = flm_incoherent_mc(&g, &ens).unwrap();
        let slack = 3.0 * (c.stderr.unwrap().powi(2) + i.stderr.unwrap().powi(2)).sqrt();
        assert!(i.value >= c.value - slack);
    }

    #[test]
    fn seed_fixes_result() {
        let g = geom();
        let ens = DisplacementEnsemble::isotropic(0.7, 10_000, 42);
        let a = flm_coherent_mc(&g, &ens).unwrap();
        let b = flm_coherent_mc(&g, &ens).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| flm_coherent_mc(&g, &ens).unwrap());
        assert_eq!(a, c);
        let other = DisplacementEnsemble { seed: 43, ..ens };
        assert_ne!(a, flm_coherent_mc(&g, &other).unwrap());
    }

    #[test]
    fn small_ensembles() {
        let g = geom();
        let one = flm_coherent_mc(&g, &DisplacementEnsemble::isotropic(0.3, 1, 1)).unwrap();
        assert!(one.stderr.is_none());
        let explicit = DisplacementEnsemble::explicit(vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let r = flm_incoherent_mc(&g, &explicit).unwrap();
        assert_relative_eq!(r.value, 9.0);
        assert!(flm_coherent_mc(&g, &DisplacementEnsemble::explicit(Vec::new())).is_err());
        assert!(flm_coherent_mc(&g, &DisplacementEnsemble::isotropic(-1.0, 10, 1)).is_err());
        assert!(flm_coherent_mc(&g, &DisplacementEnsemble::isotropic(1.0, 0, 1)).is_err());
    }

    #[test]
    fn explicit_samples_by_hand() {
        let g = geom();
        let samples = vec![[0.1, -0.2, 0.3], [0.5, 0.0, -0.4], [-0.3, 0.9, 0.05]];
        let phase = |r: &[f64; 3]| -> Complex64 {
            g.k_vectors
                .iter()
                .map(|k| Complex64::from_polar(1.0, k.x * r[0] + k.y * r[1] + k.z * r[2]))
                .sum()
        };
        let mean: Complex64 = samples.iter().map(phase).sum::<Complex64>() / 3.0;
        let r = flm_coherent_mc(&g, &DisplacementEnsemble::explicit(samples)).unwrap();
        assert_relative_eq!(r.value, mean.norm_sqr(), max_relative = 1e-13);
    }
}
