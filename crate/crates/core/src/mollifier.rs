//! The standard bump `exp(1/(t^2 - 1))` on `(-1, 1)`, its rescalings and its
//! cumulative distribution.

use std::sync::OnceLock;

use crate::interp;
use crate::quadrature::{integrate, Tolerance};

/// `∫_{-1}^{1} exp(1/(t^2-1)) dt`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

/// Unnormalised bump.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    (1.0 / (t * t - 1.0)).exp()
}

/// Derivative of [`bump`].
pub fn bump_d1(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let w = t * t - 1.0;
    -2.0 * t / (w * w) * (1.0 / w).exp()
}

/// Unit-mass density on `(-1, 1)`.
pub fn density(t: f64) -> f64 {
    bump(t) / BUMP_MASS
}

pub fn density_d1(t: f64) -> f64 {
    bump_d1(t) / BUMP_MASS
}

/// Rescaled kernel `phi_eps(x) = density(x/eps)/eps`, supported in `(-eps, eps)`.
pub fn phi(x: f64, eps: f64) -> f64 {
    density(x / eps) / eps
}

const CDF_CELLS: usize = 2048;

struct CdfTable {
    values: Vec<f64>,
}

fn cdf_table() -> &'static CdfTable {
    static TABLE: OnceLock<CdfTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / CDF_CELLS as f64;
        let mut values = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..CDF_CELLS {
            let a = -1.0 + k as f64 * h;
            let piece: f64 = integrate(density, a, a + h, Tolerance::absolute(1e-17))
                .expect("bump density is smooth on every cell");
            acc += piece;
            values.push(acc);
        }
        // the total differs from 1 only by rounding; pin it
        let total = acc;
        for v in values.iter_mut() {
            *v /= total;
        }
        CdfTable { values }
    })
}

/// Cumulative distribution `Φ(t) = ∫_{-1}^{t} density`.
pub fn cdf(t: f64) -> f64 {
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let table = cdf_table();
    let h = 2.0 / CDF_CELLS as f64;
    let (k, u) = interp::locate(t, -1.0, h, CDF_CELLS + 1);
    let x0 = -1.0 + k as f64 * h;
    let x1 = x0 + h;
    interp::quintic(
        u,
        [table.values[k], h * density(x0), h * h * density_d1(x0)],
        [table.values[k + 1], h * density(x1), h * h * density_d1(x1)],
    )
}

/// Smooth monotone step: 0 for `r <= 0`, 1 for `r >= 1`, strictly increasing
/// in between.
pub fn smooth_step(r: f64) -> f64 {
    cdf(2.0 * r - 1.0)
}

pub fn smooth_step_d1(r: f64) -> f64 {
    2.0 * density(2.0 * r - 1.0)
}

pub fn smooth_step_d2(r: f64) -> f64 {
    4.0 * density_d1(2.0 * r - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_matches_quadrature() {
        let m: f64 = integrate(bump, -1.0, 1.0, Tolerance::absolute(1e-15)).unwrap();
        assert!((m - BUMP_MASS).abs() < 1e-14);
    }

    #[test]
    fn scaled_kernel_has_unit_mass() {
        let eps = 1e-4;
        let m: f64 = integrate(|x| phi(x, eps), -eps, eps, Tolerance::absolute(1e-14)).unwrap();
        assert!((m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &t in &[-0.9, -0.5, 0.0, 0.3, 0.77] {
            let h = 1e-6;
            let fd = (bump(t + h) - bump(t - h)) / (2.0 * h);
            assert!((fd - bump_d1(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn cdf_matches_direct_quadrature() {
        for k in 0..40 {
            let t = -0.99 + k as f64 * 0.0497;
            let direct: f64 = integrate(density, -1.0, t, Tolerance::absolute(1e-15)).unwrap();
            assert!((cdf(t) - direct).abs() < 1e-12, "t = {t}");
        }
        assert!((cdf(0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn smooth_step_endpoints_are_exact() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(-3.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert_eq!(smooth_step(7.0), 1.0);
        assert_eq!(smooth_step_d1(1.0), 0.0);
        for k in 1..=101 {
            let r = k as f64 / 102.0;
            assert!(smooth_step_d1(r) > 0.0);
        }
    }
}
