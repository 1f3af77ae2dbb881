//! Electric and magnetic field of the |3 sigma>_3 tri-gamma mode and the
//! Lorentz transformation of complex field pairs.
//!
//! Fields are monochromatic spatial modes with the e^{-i w t} factor dropped
//! and unit amplitude per photon. The magnetic field of each photon is
//! k_hat x e_phi, so |E| = |B| for a single plane wave.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{verify_bragg, LatticeSpec, TriGammaGeometry, Vec3, DEFAULT_BRAGG_TOL};

pub type CVec3 = Vector3<Complex64>;

/// Half-width of the cube of fcc translation indices sampled by [`cancellation_residual`].
pub const SITE_INDEX_RANGE: i64 = 24;
/// Points per edge of the unit-cell grid used to normalise the cancellation residual.
pub const CELL_GRID_POINTS: usize = 16;

/// Paired complex E and B fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldState {
    pub e: CVec3,
    pub b: CVec3,
}

impl FieldState {
    pub fn new(e: CVec3, b: CVec3) -> Self {
        Self { e, b }
    }

    pub fn from_real(e: Vec3, b: Vec3) -> Self {
        Self {
            e: e.map(Complex64::from),
            b: b.map(Complex64::from),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().chain(self.b.iter()).all(|c| c.is_finite())
    }

    /// |E|^2 - |B|^2, invariant under boosts.
    pub fn invariant_energy(&self) -> f64 {
        self.e.norm_squared() - self.b.norm_squared()
    }

    /// Re(E . B*), invariant under boosts.
    pub fn invariant_pseudoscalar(&self) -> f64 {
        self.e
            .iter()
            .zip(self.b.iter())
            .map(|(e, b)| (e * b.conj()).re)
            .sum()
    }
}

fn real_dot(v: &CVec3, beta: &Vec3) -> Complex64 {
    v.x * beta.x + v.y * beta.y + v.z * beta.z
}

fn real_cross(beta: &Vec3, v: &CVec3) -> CVec3 {
    CVec3::new(
        v.z * beta.y - v.y * beta.z,
        v.x * beta.z - v.z * beta.x,
        v.y * beta.x - v.x * beta.y,
    )
}

fn scale(v: &Vec3, s: Complex64) -> CVec3 {
    v.map(|x| s * x)
}

/// Electric field of the tri-gamma mode at `r`:
/// E(r) = e^{i k z cos(theta)} sum_n e_phi_n e^{i k rho sin(theta) cos(phi - phi_n)}.
pub fn evaluate_e(geom: &TriGammaGeometry, r: &Vec3) -> CVec3 {
    let longitudinal = Complex64::from_polar(1.0, geom.k_longitudinal() * r.z);
    let mut sum = CVec3::zeros();
    for (k, e) in geom.k_vectors.iter().zip(&geom.e_pols) {
        let phase = k.x * r.x + k.y * r.y;
        sum += scale(e, Complex64::from_polar(1.0, phase));
    }
    sum * longitudinal
}

/// Magnetic field of the tri-gamma mode: each photon contributes k_hat_n x e_phi_n.
pub fn evaluate_b(geom: &TriGammaGeometry, r: &Vec3) -> CVec3 {
    let longitudinal = Complex64::from_polar(1.0, geom.k_longitudinal() * r.z);
    let mut sum = CVec3::zeros();
    for (k, e) in geom.k_vectors.iter().zip(&geom.e_pols) {
        let phase = k.x * r.x + k.y * r.y;
        let b = (k / geom.k_mag).cross(e);
        sum += scale(&b, Complex64::from_polar(1.0, phase));
    }
    sum * longitudinal
}

pub fn evaluate(geom: &TriGammaGeometry, r: &Vec3) -> FieldState {
    FieldState::new(evaluate_e(geom, r), evaluate_b(geom, r))
}

/// Largest |E| on a regular grid over the conventional cubic cell.
pub fn max_field_in_cell(geom: &TriGammaGeometry, lattice: &LatticeSpec, points: usize) -> f64 {
    let step = lattice.a() / points as f64;
    (0..points)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0_f64;
            for j in 0..points {
                for l in 0..points {
                    let crystal = Vec3::new(i as f64 * step, j as f64 * step, l as f64 * step);
                    let r = lattice.crystal_to_working(&crystal);
                    best = best.max(evaluate_e(geom, &r).norm());
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Uniformly sampled fcc translations with indices in [-range, range].
pub fn random_lattice_sites(
    lattice: &LatticeSpec,
    n_sites: usize,
    range: i64,
    seed: u64,
) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites = Vec::with_capacity(n_sites);
    while sites.len() < n_sites {
        let n = [0; 3].map(|_: i64| rng.random_range(-range..=range));
        if let Ok(site) = lattice.lattice_site(n) {
            sites.push(site);
        }
    }
    sites
}

/// Worst |E| over `n_sites` random lattice translations, relative to the largest
/// |E| found on a grid over one unit cell.
///
/// The geometry must satisfy the Bragg condition for `lattice`.
pub fn cancellation_residual(
    geom: &TriGammaGeometry,
    lattice: &LatticeSpec,
    n_sites: usize,
    seed: u64,
) -> Result<f64> {
    let check = verify_bragg(geom, lattice, DEFAULT_BRAGG_TOL);
    if !check.satisfied {
        return Err(Error::Precondition(format!(
            "geometry does not satisfy the Bragg condition (residual {:e})",
            check.max_residual
        )));
    }
    if n_sites == 0 {
        log::warn!("no lattice sites sampled; cancellation residual is 0 by convention");
        return Ok(0.0);
    }
    let reference = max_field_in_cell(geom, lattice, CELL_GRID_POINTS);
    let sites = random_lattice_sites(lattice, n_sites, SITE_INDEX_RANGE, seed);
    let worst = sites
        .par_iter()
        .map(|r| evaluate_e(geom, r).norm())
        .reduce(|| 0.0, f64::max);
    Ok(worst / reference)
}

/// |E(site + delta) + E(site - delta)| / |E(site + delta) - E(site - delta)|.
///
/// Small when the field around `site` is odd in the transverse offset.
pub fn transverse_antisymmetry(geom: &TriGammaGeometry, site: &Vec3, delta: &Vec3) -> Result<f64> {
    let len = delta.norm();
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::domain("offset must be nonzero and finite"));
    }
    if delta.z.abs() > 1e-12 * len {
        return Err(Error::domain("offset must be perpendicular to the channel axis"));
    }
    let plus = evaluate_e(geom, &(site + delta));
    let minus = evaluate_e(geom, &(site - delta));
    Ok((plus + minus).norm() / (plus - minus).norm())
}

fn lorentz_gamma(beta: &Vec3) -> Result<f64> {
    let b2 = beta.norm_squared();
    if !(b2.is_finite() && b2 < 1.0) {
        return Err(Error::domain(format!(
            "|beta| must be < 1, got {}",
            b2.sqrt()
        )));
    }
    Ok(1.0 / (1.0 - b2).sqrt())
}

/// Fields seen from a frame moving with velocity `beta` (in units of c):
///
/// E' = g (E + beta x B) - g^2/(g+1) beta (beta . E)
/// B' = g (B - beta x E) - g^2/(g+1) beta (beta . B)
///
/// applied to the real and imaginary parts alike.
pub fn lorentz_transform(fs: &FieldState, beta: &Vec3) -> Result<FieldState> {
    let gamma = lorentz_gamma(beta)?;
    let c = gamma * gamma / (gamma + 1.0);
    let e = (fs.e + real_cross(beta, &fs.b)) * Complex64::from(gamma)
        - scale(beta, real_dot(&fs.e, beta) * c);
    let b = (fs.b - real_cross(beta, &fs.e)) * Complex64::from(gamma)
        - scale(beta, real_dot(&fs.b, beta) * c);
    Ok(FieldState { e, b })
}

/// Tolerance of [`longitudinal_b_invariance_check`], relative to max(|B|, 1).
pub const INVARIANCE_TOL: f64 = 1e-12;

/// True when E vanishes, B has no component transverse to `beta`, and the boost
/// leaves B unchanged. A zero boost is trivially invariant.
pub fn longitudinal_b_invariance_check(fs: &FieldState, beta: &Vec3) -> Result<bool> {
    lorentz_gamma(beta)?;
    if beta.norm_squared() == 0.0 {
        return Ok(true);
    }
    let tol = INVARIANCE_TOL * fs.b.norm().max(1.0);
    if fs.e.norm() > tol {
        return Ok(false);
    }
    let axis = beta.normalize();
    let along = real_dot(&fs.b, &axis);
    let transverse = fs.b - scale(&axis, along);
    if transverse.norm() > tol {
        return Ok(false);
    }
    let boosted = lorentz_transform(fs, beta)?;
    Ok((boosted.b - fs.b).norm() <= tol)
}

/// A sample of the electric field on a plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub r: Vec3,
    pub e: CVec3,
}

/// E on the grid origin + i*u/(nu-1) + j*v/(nv-1), row-major in j.
pub fn field_map(
    geom: &TriGammaGeometry,
    origin: &Vec3,
    u: &Vec3,
    v: &Vec3,
    nu: usize,
    nv: usize,
) -> Result<Vec<FieldSample>> {
    if nu == 0 || nv == 0 {
        return Err(Error::domain("field map needs at least one point per axis"));
    }
    let frac = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let samples = (0..nv)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..nu).map(move |i| {
                let r = origin + u * frac(i, nu) + v * frac(j, nv);
                FieldSample {
                    r,
                    e: evaluate_e(geom, &r),
                }
            })
        })
        .collect();
    Ok(samples)
}
