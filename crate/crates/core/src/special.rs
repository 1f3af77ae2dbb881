//! Bessel function J0 and its large-argument form.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Below this |x| the power series is used.
const SERIES_LIMIT: f64 = 2.0;
/// Above this |x| the Hankel expansion is used instead of the recurrence.
const HANKEL_LIMIT: f64 = 1000.0;

/// Bessel function of the first kind of order zero.
///
/// Power series near the origin, Miller's backward recurrence normalised with
/// J0 + 2 (J2 + J4 + ...) = 1 up to |x| = 1000, and the Hankel asymptotic
/// expansion beyond. Absolute error is a few ulp over |x| <= 50.
pub fn bessel_j0(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let x = x.abs();
    if x.is_infinite() {
        return 0.0;
    }
    if x < SERIES_LIMIT {
        series(x)
    } else if x <= HANKEL_LIMIT {
        miller(x)
    } else {
        hankel(x)
    }
}

fn series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(x: f64) -> f64 {
    let start = x + 30.0 + 10.0 * x.cbrt();
    let mut n = start.ceil() as usize;
    n += n % 2;
    let two_over_x = 2.0 / x;
    let mut next = 0.0; // J_{n+1}
    let mut current = 1e-300; // J_n, arbitrary seed
    let mut norm = 0.0;
    for m in (1..=n).rev() {
        let prev = m as f64 * two_over_x * current - next;
        next = current;
        current = prev;
        // `current` now holds J_{m-1}
        if (m - 1) % 2 == 0 && m > 1 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            current *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
        }
    }
    current / (norm + current)
}

fn hankel(x: f64) -> f64 {
    // t_k = prod_{j<=k} (-(2j-1)^2) / (k! (8x)^k);
    // P = t0 - t2 + t4 - ..., Q = t1 - t3 + t5 - ...
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut t = 1.0;
    for k in 1..16 {
        let odd = (2 * k - 1) as f64;
        t *= -odd * odd / (k as f64 * z);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
        if t.abs() < 1e-18 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Large-argument form sqrt(2 / (pi x)) cos(x - pi/4).
pub fn bessel_j0_asymptotic(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "asymptotic J0 needs a finite x > 0, got {x}"
        )));
    }
    Ok((2.0 / (PI * x)).sqrt() * (x - FRAC_PI_4).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// J0(x) = (1/pi) int_0^pi cos(x sin t) dt by the trapezoid rule, which converges
    /// geometrically for this periodic integrand.
    fn j0_integral(x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut sum = 0.5 * (1.0 + (x * PI.sin()).cos());
        for i in 1..n {
            sum += (x * (i as f64 * h).sin()).cos();
        }
        sum * h / PI
    }

    #[test]
    fn special_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!(bessel_j0(f64::NAN).is_nan());
        assert_eq!(bessel_j0(f64::INFINITY), 0.0);
        for x in [0.3, 2.0, 7.5, 33.0] {
            assert_eq!(bessel_j0(-x), bessel_j0(x));
        }
    }

    #[test]
    fn first_zero() {
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-10);
    }

    #[test]
    fn matches_integral_representation() {
        let mut worst = 0.0_f64;
        for i in 0..=5000 {
            let x = i as f64 * 0.01;
            worst = worst.max((bessel_j0(x) - j0_integral(x)).abs());
        }
        assert!(worst <= 1e-12, "max abs error {worst:e}");
    }

    #[test]
    fn agrees_with_libm_far_out() {
        let mut worst = 0.0_f64;
        for i in 0..=200_000 {
            let x = i as f64 * 0.05;
            worst = worst.max((bessel_j0(x) - libm::j0(x)).abs());
        }
        assert!(worst <= 1e-14, "max abs difference {worst:e}");
    }

    #[test]
    fn branches_agree_at_boundaries() {
        for x in [1.5, 1.9, 2.0] {
            assert!((series(x) - miller(x)).abs() < 1e-15, "x = {x}");
        }
        for x in [60.0, 400.0, 1000.0, 1500.0] {
            assert!((miller(x) - hankel(x)).abs() < 5e-15, "x = {x}");
        }
    }

    #[test]
    fn asymptotic_form_accuracy() {
        let approx5 = bessel_j0_asymptotic(5.0).unwrap();
        assert!((approx5 - (-0.171)).abs() < 1e-3, "{approx5}");
        assert!((bessel_j0(5.0) - (-0.177_596_77)).abs() < 1e-8);
        assert!(((approx5 - bessel_j0(5.0)) / bessel_j0(5.0)).abs() < 0.05);
        assert!(bessel_j0_asymptotic(0.0).is_err());
        assert!(bessel_j0_asymptotic(-1.0).is_err());
        for m in 0..5 {
            let zero = 0.75 * PI + m as f64 * PI;
            assert!(bessel_j0_asymptotic(zero).unwrap().abs() < 1e-15);
        }
    }
}
