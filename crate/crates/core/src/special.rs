//! The Bessel function `J1` and the light-cone tail kernel
//! `K(t, r) = J1(m sqrt(t^2 - r^2)) / sqrt(t^2 - r^2)` that appears in every
//! representation formula of the pipeline.

use crate::error::{Error, Result};

/// Mass parameter of the tail kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub mass: f64,
}

impl KernelParams {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "kernel mass must be positive and finite, got {mass}"
            )));
        }
        Ok(Self { mass })
    }
}

/// Bessel function of the first kind, order one, for nonnegative arguments.
///
/// Accuracy target: `|result - J1(x)| <= 1e-12 * max(1, |J1(x)|)`. Backed by
/// libm's msun port (rational minimax on [0,2], asymptotic P/Q fits above),
/// which stays a few ULP from the true value on the whole range used here.
pub fn bessel_j1(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "bessel_j1 argument",
        });
    }
    if x < 0.0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "bessel_j1 requires x >= 0, got {x}"
        )));
    }
    Ok(libm::j1(x))
}

/// `J1(x)/x`, continuous through `x = 0` where it equals `1/2`.
///
/// The solver samples the kernel exactly on the light cone, so the small-x
/// branch uses the series `1/2 - x^2/16 + x^4/384 - x^6/18432` instead of the
/// cancelling quotient.
#[inline]
pub fn j1_over_x(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1e-2 {
        let z = x * x;
        0.5 + z * (-1.0 / 16.0 + z * (1.0 / 384.0 - z / 18432.0))
    } else {
        libm::j1(x) / x
    }
}

/// Light-cone tail kernel.
///
/// Returns `0` for `t < r`, the continuous cone limit `m/2` at `t = r`, and
/// `J1(m sqrt(t^2 - r^2)) / sqrt(t^2 - r^2)` inside the cone. At `r = 0` this
/// is the diagonal kernel `J1(m t) / t`.
pub fn tail_kernel(t: f64, r: f64, params: KernelParams) -> f64 {
    debug_assert!(r >= 0.0);
    if t <= r {
        if t == r {
            return 0.5 * params.mass;
        }
        return 0.0;
    }
    // t^2 - r^2 written as (t-r)(t+r): no cancellation next to the cone.
    let rho = libm::sqrt((t - r) * (t + r));
    let m = params.mass;
    m * j1_over_x(m * rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j1_small_argument_law() {
        assert_eq!(bessel_j1(0.0).unwrap(), 0.0);
        // J1(x) ~ x/2 for tiny x; the cubic correction is ~6e-26 here.
        let v = bessel_j1(1e-8).unwrap();
        assert!((v - 5e-9).abs() <= 1e-20, "got {v}");
    }

    #[test]
    fn j1_rejects_bad_input() {
        assert!(bessel_j1(f64::NAN).is_err());
        assert!(bessel_j1(f64::INFINITY).is_err());
        assert!(bessel_j1(-1.0).is_err());
    }

    #[test]
    fn kernel_outside_cone_is_zero() {
        let p = KernelParams::new(3.0).unwrap();
        assert_eq!(tail_kernel(0.5, 1.0, p), 0.0);
        assert_eq!(tail_kernel(0.0, 0.5, p), 0.0);
    }

    #[test]
    fn kernel_on_cone_is_half_mass() {
        let p = KernelParams::new(2.0).unwrap();
        assert_eq!(tail_kernel(3.0, 3.0, p), 1.0);
        let p = KernelParams::new(0.5).unwrap();
        assert_eq!(tail_kernel(0.0, 0.0, p), 0.25);
    }

    #[test]
    fn kernel_cone_continuity() {
        for &m in &[0.5, 1.0, 2.0] {
            let p = KernelParams::new(m).unwrap();
            for &r in &[0.0, 0.7, 2.0] {
                let inside = tail_kernel(r + 1e-8, r, p);
                assert!(
                    (inside - 0.5 * m).abs() <= 1e-6,
                    "m={m} r={r}: {inside} vs {}",
                    0.5 * m
                );
            }
        }
    }

    #[test]
    fn kernel_interior_value_matches_series_reference() {
        // K(2, 1) with m = 1 is J1(sqrt(3))/sqrt(3).
        let p = KernelParams::new(1.0).unwrap();
        let x = libm::sqrt(3.0);
        let want = crate::oracle::reference::j1_series(x) / x;
        let got = tail_kernel(2.0, 1.0, p);
        assert!((got - want).abs() <= 1e-13, "{got} vs {want}");
    }

    #[test]
    fn kernel_boundedness() {
        // J1(x)/x decays from 1/2, so |K| <= 1.1 * m/2 with margin.
        for &m in &[0.5, 1.0, 2.0] {
            let p = KernelParams::new(m).unwrap();
            let mut i = 0;
            while i < 4000 {
                let t = 0.005 * (i as f64);
                let r = 0.3;
                let v = tail_kernel(t, r, p);
                assert!(v.abs() <= 0.55 * m, "m={m} t={t}: {v}");
                i += 1;
            }
        }
    }
}
