//! Tri-gamma wavevector geometry and the fcc Bragg condition.
//!
//! All vectors live in the working frame, whose z axis is the channel axis.
//! [`LatticeSpec`] carries the rotation from crystal axes into that frame.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

pub type Vec3 = Vector3<f64>;

/// Angular separation of the three photons around the channel axis.
pub const THIRD_TURN: f64 = TAU / 3.0;

/// Points used by the coarse Bragg-angle scan.
pub const DEFAULT_SCAN_POINTS: usize = 10_000;
/// Relative tolerance used to accept a wavevector difference as a reciprocal vector.
pub const DEFAULT_BRAGG_TOL: f64 = 1e-9;

/// Three equal-magnitude wavevectors on a cone around z, 120 degrees apart.
#[derive(Debug, Clone, PartialEq)]
pub struct TriGammaGeometry {
    pub k_mag: f64,
    pub theta: f64,
    /// Azimuth of the first photon; the others follow at +120 and +240 degrees.
    pub azimuth_offset: f64,
    pub phis: [f64; 3],
    pub k_vectors: [Vec3; 3],
    pub k_entangled: Vec3,
    pub e_pols: [Vec3; 3],
}

impl TriGammaGeometry {
    pub fn new(k_mag: f64, theta: f64) -> Result<Self> {
        Self::with_azimuth(k_mag, theta, 0.0)
    }

    /// Same cone, rotated about z so that the first photon sits at `azimuth_offset`.
    pub fn with_azimuth(k_mag: f64, theta: f64, azimuth_offset: f64) -> Result<Self> {
        require_positive("k_mag", k_mag)?;
        if !(0.0..FRAC_PI_2).contains(&theta) {
            return Err(Error::domain(format!(
                "cone half-angle must lie in [0, pi/2), got {theta}"
            )));
        }
        if !azimuth_offset.is_finite() {
            return Err(Error::domain("azimuth offset must be finite"));
        }
        let (sin_t, cos_t) = theta.sin_cos();
        let phis = [0, 1, 2].map(|n| azimuth_offset + n as f64 * THIRD_TURN);
        let k_vectors = phis.map(|phi| {
            let (s, c) = phi.sin_cos();
            Vec3::new(k_mag * sin_t * c, k_mag * sin_t * s, k_mag * cos_t)
        });
        let e_pols = phis.map(|phi| {
            let (s, c) = phi.sin_cos();
            Vec3::new(-s, c, 0.0)
        });
        Ok(Self {
            k_mag,
            theta,
            azimuth_offset,
            phis,
            k_vectors,
            k_entangled: Vec3::new(0.0, 0.0, k_mag * cos_t),
            e_pols,
        })
    }

    /// In-plane wavenumber k sin(theta).
    pub fn k_transverse(&self) -> f64 {
        self.k_mag * self.theta.sin()
    }

    /// Longitudinal wavenumber k cos(theta), the magnitude of the entangled wavevector.
    pub fn k_longitudinal(&self) -> f64 {
        self.k_mag * self.theta.cos()
    }

    /// Pairwise differences k1 - k2, k2 - k3, k3 - k1.
    pub fn differences(&self) -> [Vec3; 3] {
        let k = &self.k_vectors;
        [k[0] - k[1], k[1] - k[2], k[2] - k[0]]
    }
}

/// Builds the tri-gamma cone with its first photon at azimuth zero.
pub fn build_trigamma(k_mag: f64, theta: f64) -> Result<TriGammaGeometry> {
    TriGammaGeometry::new(k_mag, theta)
}

/// Rotation by `angle` about the working-frame z axis.
pub fn rotation_about_z(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vec3::z_axis(), angle).matrix()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeInput {
    a: f64,
    #[serde(default = "default_axis")]
    channel_axis: [i32; 3],
    #[serde(default = "default_cutoff")]
    g_shell_cutoff: u32,
}

fn default_axis() -> [i32; 3] {
    [1, 1, 1]
}

fn default_cutoff() -> u32 {
    4
}

/// fcc crystal with a chosen channel direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeInput", into = "LatticeInput")]
pub struct LatticeSpec {
    a: f64,
    channel_axis: [i32; 3],
    g_shell_cutoff: u32,
    /// Rows are the working-frame x, y, z axes in crystal coordinates.
    to_working: Matrix3<f64>,
}

impl TryFrom<LatticeInput> for LatticeSpec {
    type Error = Error;

    fn try_from(input: LatticeInput) -> Result<Self> {
        LatticeSpec::new(input.a, input.channel_axis, input.g_shell_cutoff)
    }
}

impl From<LatticeSpec> for LatticeInput {
    fn from(spec: LatticeSpec) -> Self {
        LatticeInput {
            a: spec.a,
            channel_axis: spec.channel_axis,
            g_shell_cutoff: spec.g_shell_cutoff,
        }
    }
}

impl LatticeSpec {
    pub fn new(a: f64, channel_axis: [i32; 3], g_shell_cutoff: u32) -> Result<Self> {
        require_positive("lattice constant", a)?;
        if channel_axis == [0, 0, 0] {
            return Err(Error::domain("channel axis must be nonzero"));
        }
        let z = Vec3::new(
            channel_axis[0] as f64,
            channel_axis[1] as f64,
            channel_axis[2] as f64,
        )
        .normalize();
        // x: the crystal axis least aligned with the channel, projected off it
        let reference = (0..3)
            .min_by(|&i, &j| z[i].abs().total_cmp(&z[j].abs()))
            .map(|i| {
                let mut e = Vec3::zeros();
                e[i] = 1.0;
                e
            })
            .unwrap();
        let x = (reference - z * reference.dot(&z)).normalize();
        let y = z.cross(&x);
        let to_working = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self {
            a,
            channel_axis,
            g_shell_cutoff,
            to_working,
        })
    }

    /// Rhodium, (1,1,1) channel.
    pub fn rhodium_111() -> Self {
        Self::new(crate::constants::RH_LATTICE_CONSTANT_M, [1, 1, 1], 4).unwrap()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn channel_axis(&self) -> [i32; 3] {
        self.channel_axis
    }

    pub fn g_shell_cutoff(&self) -> u32 {
        self.g_shell_cutoff
    }

    pub fn with_cutoff(&self, g_shell_cutoff: u32) -> Self {
        Self {
            g_shell_cutoff,
            ..self.clone()
        }
    }

    /// Crystal-to-working-frame rotation.
    pub fn to_working(&self) -> &Matrix3<f64> {
        &self.to_working
    }

    pub fn crystal_to_working(&self, v: &Vec3) -> Vec3 {
        self.to_working * v
    }

    /// Reciprocal vector (2 pi / a)(h, k, l) in the working frame.
    pub fn reciprocal(&self, miller: [i32; 3]) -> Vec3 {
        let scale = TAU / self.a;
        self.crystal_to_working(&Vec3::new(
            scale * miller[0] as f64,
            scale * miller[1] as f64,
            scale * miller[2] as f64,
        ))
    }

    /// fcc translation (a/2)(n1, n2, n3) in the working frame. The index sum must be even.
    pub fn lattice_site(&self, n: [i64; 3]) -> Result<Vec3> {
        if (n[0] + n[1] + n[2]).rem_euclid(2) != 0 {
            return Err(Error::domain(format!(
                "{n:?} is not an fcc translation (index sum must be even)"
            )));
        }
        let half = 0.5 * self.a;
        Ok(self.crystal_to_working(&Vec3::new(
            half * n[0] as f64,
            half * n[1] as f64,
            half * n[2] as f64,
        )))
    }
}

/// A reciprocal lattice vector with its Miller indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocalVector {
    pub miller: [i32; 3],
    pub g: Vec3,
}

fn fcc_allowed(miller: [i32; 3]) -> bool {
    let parity = miller.map(|m| m.rem_euclid(2));
    parity[0] == parity[1] && parity[1] == parity[2]
}

/// All nonzero fcc reciprocal vectors with |h|, |k|, |l| <= cutoff.
///
/// The selection rule is the usual one for the conventional cubic cell:
/// Miller indices all even or all odd.
pub fn reciprocal_vectors(lattice: &LatticeSpec) -> Vec<ReciprocalVector> {
    let c = lattice.g_shell_cutoff as i32;
    let mut out = Vec::new();
    for h in -c..=c {
        for k in -c..=c {
            for l in -c..=c {
                let miller = [h, k, l];
                if miller == [0, 0, 0] || !fcc_allowed(miller) {
                    continue;
                }
                out.push(ReciprocalVector {
                    miller,
                    g: lattice.reciprocal(miller),
                });
            }
        }
    }
    out
}

/// Nearest reciprocal vector to `d`, with the relative mismatch |d - G| / |G|.
fn nearest(set: &[ReciprocalVector], d: &Vec3) -> Option<(ReciprocalVector, f64)> {
    set.iter()
        .map(|rv| (*rv, (d - rv.g).norm() / rv.g.norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Result of checking a geometry against the Bragg condition.
#[derive(Debug, Clone, PartialEq)]
pub struct BraggCheck {
    pub satisfied: bool,
    /// Worst |(k_n - k_m) - G| / |G| over the three pairs.
    pub max_residual: f64,
    /// Best-matching Miller indices for k1-k2, k2-k3, k3-k1.
    pub matches: [Option<[i32; 3]>; 3],
}

/// Checks that every pairwise difference k_n - k_m is a reciprocal vector within `tol`.
pub fn verify_bragg(geom: &TriGammaGeometry, lattice: &LatticeSpec, tol: f64) -> BraggCheck {
    let set = reciprocal_vectors(lattice);
    verify_against(geom, &set, tol)
}

fn verify_against(geom: &TriGammaGeometry, set: &[ReciprocalVector], tol: f64) -> BraggCheck {
    let mut max_residual = 0.0_f64;
    let mut matches = [None; 3];
    for (slot, d) in matches.iter_mut().zip(geom.differences()) {
        match nearest(set, &d) {
            Some((rv, residual)) => {
                max_residual = max_residual.max(residual);
                *slot = Some(rv.miller);
            }
            None => max_residual = f64::INFINITY,
        }
    }
    BraggCheck {
        satisfied: max_residual <= tol,
        max_residual,
        matches,
    }
}

/// A cone angle and orientation at which the tri-gamma differences are reciprocal vectors.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BraggCandidate {
    pub theta: f64,
    pub azimuth_offset: f64,
    /// Miller indices matched by k1-k2, k2-k3, k3-k1.
    pub millers: [[i32; 3]; 3],
    pub residual: f64,
}

impl BraggCandidate {
    pub fn geometry(&self, k_mag: f64) -> Result<TriGammaGeometry> {
        TriGammaGeometry::with_azimuth(k_mag, self.theta, self.azimuth_offset)
    }
}

/// Scans theta on a uniform grid over [0, pi/2) for a sign change of `f`, then bisects
/// to the limit of floating-point resolution.
fn scan_and_bisect(f: impl Fn(f64) -> f64, points: usize) -> Option<f64> {
    let step = FRAC_PI_2 / points as f64;
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    for i in 1..points {
        let hi = i as f64 * step;
        let f_hi = f(hi);
        if f_lo == 0.0 {
            return Some(lo);
        }
        if f_lo.signum() != f_hi.signum() {
            let (mut a, mut b) = (lo, hi);
            let mut f_a = f_lo;
            loop {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let f_mid = f(mid);
                if f_mid == 0.0 {
                    return Some(mid);
                }
                if f_mid.signum() == f_a.signum() {
                    a = mid;
                    f_a = f_mid;
                } else {
                    b = mid;
                }
            }
            return Some(if f_a.abs() <= f(b).abs() { a } else { b });
        }
        lo = hi;
        f_lo = f_hi;
    }
    None
}

/// Finds every cone angle (and the matching azimuthal orientation) for which the
/// tri-gamma differences land on reciprocal vectors perpendicular to the channel.
///
/// Candidates are sorted by angle. An empty list means no solution inside the cutoff.
pub fn bragg_angle_solve(k_mag: f64, lattice: &LatticeSpec) -> Result<Vec<BraggCandidate>> {
    bragg_angle_solve_with(k_mag, lattice, DEFAULT_SCAN_POINTS, DEFAULT_BRAGG_TOL)
}

pub fn bragg_angle_solve_with(
    k_mag: f64,
    lattice: &LatticeSpec,
    scan_points: usize,
    tol: f64,
) -> Result<Vec<BraggCandidate>> {
    require_positive("k_mag", k_mag)?;
    if scan_points < 2 {
        return Err(Error::domain("the angle scan needs at least 2 points"));
    }
    let set = reciprocal_vectors(lattice);
    let in_plane: Vec<ReciprocalVector> = set
        .iter()
        .copied()
        .filter(|rv| rv.g.z.abs() <= 1e-9 * rv.g.norm())
        .collect();

    let third = rotation_about_z(THIRD_TURN);
    let mut candidates = Vec::new();
    for rv in &in_plane {
        // k2-k3 and k3-k1 are k1-k2 turned by 120 and 240 degrees
        let second = third * rv.g;
        let third_g = third * second;
        let (Some((m2, r2)), Some((m3, r3))) =
            (nearest(&in_plane, &second), nearest(&in_plane, &third_g))
        else {
            continue;
        };
        if r2 > tol || r3 > tol {
            continue;
        }
        // each triple shows up once per member; keep the one led by its largest index
        if rv.miller < m2.miller || rv.miller < m3.miller {
            continue;
        }
        let g_norm = rv.g.norm();
        let transverse = 3f64.sqrt() * k_mag;
        let Some(theta) = scan_and_bisect(|t| transverse * t.sin() - g_norm, scan_points) else {
            continue;
        };
        let psi = rv.g.y.atan2(rv.g.x);
        let azimuth_offset = (psi + FRAC_PI_6).rem_euclid(TAU);
        let geom = TriGammaGeometry::with_azimuth(k_mag, theta, azimuth_offset)?;
        let check = verify_against(&geom, &set, tol);
        if !check.satisfied {
            continue;
        }
        candidates.push(BraggCandidate {
            theta,
            azimuth_offset,
            millers: [rv.miller, m2.miller, m3.miller],
            residual: check.max_residual,
        });
    }
    candidates.sort_by(|a, b| {
        a.theta
            .total_cmp(&b.theta)
            .then_with(|| b.millers[0].cmp(&a.millers[0]))
    });
    Ok(candidates)
}
