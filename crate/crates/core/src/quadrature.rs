//! Globally adaptive Gauss-Kronrod (7, 15) quadrature with user breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, QuadratureDiagnostics, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subintervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-300,
            max_subintervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    pub subintervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod rule with the QUADPACK error estimate.
fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut gauss = f_center * WG[3];
    let mut kronrod = f_center * WGK[7];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Piece { a, b, value, error }
}

/// Integrates `f` over [points[0], points[last]], starting from the subintervals
/// delimited by `points` (sorted, at least two entries).
pub fn integrate_with_breaks(
    f: impl Fn(f64) -> f64,
    points: &[f64],
    settings: &QuadSettings,
) -> Result<Integral> {
    if points.len() < 2 {
        return Err(Error::domain("quadrature needs at least two points"));
    }
    if points.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::domain("quadrature breakpoints must be sorted and finite"));
    }
    let lower = points[0];
    let upper = *points.last().unwrap();
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        heap.push(kronrod15(&f, w[0], w[1]));
        evaluations += 15;
    }
    let totals = |heap: &BinaryHeap<Piece>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };
    loop {
        let (value, error) = totals(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature(QuadratureDiagnostics {
                lower,
                upper,
                estimate: value,
                abs_error: error,
                subintervals: heap.len(),
                evaluations,
            }));
        }
        if error <= settings.abs_tol.max(settings.rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                abs_error: error,
                evaluations,
                subintervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("nonempty when error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if heap.len() + 2 > settings.max_subintervals || mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            return Err(Error::Quadrature(QuadratureDiagnostics {
                lower,
                upper,
                estimate: value,
                abs_error: error,
                subintervals: heap.len(),
                evaluations,
            }));
        }
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
        evaluations += 30;
    }
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, settings: &QuadSettings) -> Result<Integral> {
    if a <= b {
        integrate_with_breaks(f, &[a, b], settings)
    } else {
        let mut out = integrate_with_breaks(f, &[b, a], settings)?;
        out.value = -out.value;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let s = QuadSettings::default();
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &s).unwrap();
        assert_relative_eq!(r.value, (64.0 - 1.0) / 6.0 - 9.0, max_relative = 1e-14);
        assert_eq!(r.subintervals, 1);
    }

    #[test]
    fn oscillatory_and_singular_integrands() {
        let s = QuadSettings { rel_tol: 1e-12, ..Default::default() };
        let zero = QuadSettings { abs_tol: 1e-12, ..s };
        let r = integrate(|x| (50.0 * x).cos(), 0.0, PI, &zero).unwrap();
        assert!(r.value.abs() < 1e-12);
        let r = integrate(f64::sqrt, 0.0, 1.0, &s).unwrap();
        assert_relative_eq!(r.value, 2.0 / 3.0, max_relative = 1e-12);
        let r = integrate(|x| (-x).exp(), 3.0, 0.0, &s).unwrap();
        assert_relative_eq!(r.value, -(1.0 - (-3.0f64).exp()), max_relative = 1e-13);
    }

    #[test]
    fn breakpoints_handle_kinks() {
        let s = QuadSettings { rel_tol: 1e-13, ..Default::default() };
        let r = integrate_with_breaks(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0], &s).unwrap();
        assert_relative_eq!(r.value, 0.5 * (0.09 + 0.49), max_relative = 1e-14);
        assert_eq!(r.subintervals, 2);
    }

    #[test]
    fn failure_reports_diagnostics() {
        let s = QuadSettings { rel_tol: 1e-15, abs_tol: 0.0, max_subintervals: 4 };
        match integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, &s) {
            Err(Error::Quadrature(d)) => {
                assert_eq!(d.lower, 1e-6);
                assert!(d.subintervals <= 4);
                assert!(d.evaluations > 0);
            }
            other => panic!("expected a quadrature failure, got {other:?}"),
        }
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, &QuadSettings::default()).is_err());
    }
}
