//! The profile family `H_s(p)` adapted to a cone, with smoothing in `s`
//! near the regime switches `s* ∈ {-1, 0, 1}`.

use nalgebra::DVector;

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::{Blocks, ModelParams};
use crate::mollifier;
use crate::quadrature::{integrate_pieces, QuadValue, Tolerance};

/// Regime switches where `s ↦ H̃_s` has a corner.
pub const SWITCHES: [f64; 3] = [-1.0, 0.0, 1.0];

/// Default half-width of the smoothing windows.
pub const DEFAULT_EPS_S: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ProfileEvaluator {
    pub cone: ConeSpec,
    pub blocks: Blocks,
    pub c: f64,
    pub eps_s: f64,
}

impl ProfileEvaluator {
    pub fn new(cone: ConeSpec, blocks: Blocks, c: f64, eps_s: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "height c must be positive, got {c}"
            )));
        }
        if !(eps_s > 0.0 && eps_s < 0.1) {
            return Err(Error::InvalidInput(format!(
                "smoothing radius must lie in (0, 0.1), got {eps_s}"
            )));
        }
        Ok(Self {
            cone,
            blocks,
            c,
            eps_s,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.blocks.params
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// `F_s(y)` with derivatives in `y`.
    pub fn f_jet(&self, s: f64, y: &DVector<f64>) -> Jet {
        let c = self.c;
        let d = self.params().d_plateau;
        if s >= 1.0 {
            self.blocks.big_u(s, y).scaled(c + s)
        } else if s >= 0.0 {
            let t = (1.0 - s) * (1.0 - d);
            let shifted = y.map(|v| v - t);
            self.blocks.big_u(1.0, &shifted).scaled(c + 1.0)
        } else if s >= -1.0 {
            let mut out = self.f_minus_one(y).scaled(-s);
            out.add_scaled(1.0 + s, &self.f_jet(0.0, y));
            out
        } else {
            let m = -s;
            let ym1 = y.map(|v| v - 1.0);
            let mut inner = self.blocks.big_v(s, &ym1).scaled(c + m);
            inner.value += -m + 1.0 / m;
            inner.mul(&self.blocks.big_u(s, y))
        }
    }

    fn f_minus_one(&self, y: &DVector<f64>) -> Jet {
        let ym1 = y.map(|v| v - 1.0);
        self.blocks
            .big_v(1.0, &ym1)
            .scaled(self.c + 1.0)
            .mul(&self.blocks.big_u(1.0, y))
    }

    /// Unsmoothed `H̃_s = F_s W_s` in cone coordinates `y`.
    pub fn h_tilde_y(&self, s: f64, y: &DVector<f64>) -> Jet {
        let w = self.blocks.big_w(s, y, self.cone.radius());
        if w.value == 0.0 && w.gradient.iter().all(|&g| g == 0.0) {
            return Jet::zero(y.len());
        }
        self.f_jet(s, y).mul(&w)
    }

    /// Unsmoothed `H̃_s(p)`.
    pub fn h_tilde(&self, s: f64, p: &DVector<f64>) -> Jet {
        let y = self.cone.to_y(p);
        self.h_tilde_y(s, &y)
            .linear_pullback(self.cone.a_norm_inv())
    }

    /// Switch whose smoothing window contains `s`, if any.
    pub fn window(&self, s: f64) -> Option<f64> {
        SWITCHES.into_iter().find(|&st| (s - st).abs() < self.eps_s)
    }

    fn rho0(&self, tau: f64, s_star: f64) -> f64 {
        let e = self.eps_s;
        1.0 - mollifier::smooth_step(((tau - s_star).abs() - 0.5 * e) / (0.25 * e))
    }

    /// `∂_τ H̃_τ(y)` by central differences, one-sided next to the corner.
    fn d_tau(&self, tau: f64, y: &DVector<f64>, s_star: f64) -> Jet {
        let h = self.eps_s / 50.0;
        let f = |t: f64| self.h_tilde_y(t, y);
        let mut out;
        if (tau - s_star).abs() < h {
            let sign = if tau >= s_star { 1.0 } else { -1.0 };
            let hs = sign * h;
            out = f(tau).scaled(-3.0);
            out.add_scaled(4.0, &f(tau + hs));
            out.add_scaled(-1.0, &f(tau + 2.0 * hs));
            out = out.scaled(1.0 / (2.0 * hs));
        } else {
            out = f(tau + h);
            out.add_scaled(-1.0, &f(tau - h));
            out = out.scaled(1.0 / (2.0 * h));
        }
        out
    }

    // each τ-difference carries rounding noise of about
    // EPSILON * |jet| * eps_s / h, which bounds what the window integral of
    // the jet `scale` can resolve
    fn quad_tol(scale: f64) -> Tolerance {
        Tolerance {
            abs_tol: 1e-13_f64.max(1e3 * f64::EPSILON * scale),
            rel_tol: 1e-11,
            max_intervals: 400,
        }
    }

    // the τ-difference carries rounding noise of order 1e-11 times the
    // kernel mass, so the derivative integral cannot be resolved further
    fn ds_tol() -> Tolerance {
        Tolerance {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 400,
        }
    }

    fn window_breaks(&self, s_star: f64, extra: &[f64]) -> Vec<f64> {
        let e = self.eps_s;
        let lo = s_star - 0.75 * e;
        let hi = s_star + 0.75 * e;
        let mut b = vec![lo, s_star - 0.5 * e, s_star, s_star + 0.5 * e, hi];
        b.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Smoothed `H_s` in cone coordinates.
    pub fn h_y(&self, s: f64, y: &DVector<f64>) -> Result<Jet> {
        let base = self.h_tilde_y(s, y);
        let Some(s_star) = self.window(s) else {
            return Ok(base);
        };
        let r = 0.25 * self.eps_s;
        let breaks = self.window_breaks(s_star, &[s, s - r, s + r]);
        let correction: Jet = integrate_pieces(
            |tau| {
                let kernel = mollifier::cdf((s - tau) / r) - if tau <= s { 1.0 } else { 0.0 };
                if kernel == 0.0 {
                    return Jet::zero(y.len());
                }
                let rho = self.rho0(tau, s_star);
                if rho == 0.0 {
                    return Jet::zero(y.len());
                }
                self.d_tau(tau, y, s_star).scaled(rho * kernel)
            },
            &breaks,
            Self::quad_tol(base.max_abs()),
        )?;
        let mut out = base;
        out.add_scaled(1.0, &correction);
        Ok(out)
    }

    /// Smoothed `H_s(p)` with gradient and Hessian in `p`.
    pub fn h(&self, s: f64, p: &DVector<f64>) -> Result<Jet> {
        let y = self.cone.to_y(p);
        Ok(self.h_y(s, &y)?.linear_pullback(self.cone.a_norm_inv()))
    }

    pub fn value(&self, s: f64, p: &DVector<f64>) -> Result<f64> {
        Ok(self.h(s, p)?.value)
    }

    /// `∂_s H_s(p)` from the smoothed-derivative formula (no differencing
    /// of `H_s` itself).
    pub fn ds(&self, s: f64, p: &DVector<f64>) -> Result<f64> {
        let y = self.cone.to_y(p);
        let Some(s_star) = self.window(s) else {
            return Ok(self.d_tau_outside(s, &y));
        };
        let rho = self.rho0(s, s_star);
        let plain = if rho < 1.0 {
            (1.0 - rho) * self.d_tau(s, &y, s_star).value
        } else {
            0.0
        };
        let r = 0.25 * self.eps_s;
        let breaks = self.window_breaks(s_star, &[s - r, s + r]);
        let smooth: f64 = integrate_pieces(
            |tau| {
                let k = mollifier::phi(s - tau, r);
                if k == 0.0 {
                    return 0.0;
                }
                self.rho0(tau, s_star) * self.d_tau(tau, &y, s_star).value * k
            },
            &breaks,
            Self::ds_tol(),
        )?;
        Ok(plain + smooth)
    }

    fn d_tau_outside(&self, s: f64, y: &DVector<f64>) -> f64 {
        // away from the windows the only corners sit at the switches, which
        // are at distance >= eps_s
        self.d_tau(s, y, f64::INFINITY).value
    }

    /// Sector membership `y_i > 0`, `|y| < R`.
    pub fn in_sector(&self, p: &DVector<f64>) -> bool {
        let y = self.cone.to_y(p);
        y.iter().all(|&v| v > 0.0) && y.norm() < self.cone.radius()
    }
}

/// A sample point `(p, q, t)` of a time-dependent Hamiltonian.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub t: f64,
}

/// Finds `s_lo < s_hi` with `H_{s_lo} < H < H_{s_hi}` on the samples, by
/// doubling `|s|`. Inequalities are strict wherever `H` is nonzero.
pub fn exhaust_bracket<H>(
    h: H,
    samples: &[PhasePoint],
    evaluator: &ProfileEvaluator,
) -> Result<(f64, f64)>
where
    H: Fn(&DVector<f64>, &DVector<f64>, f64) -> f64,
{
    let p_star = evaluator.cone.p_star();
    for pt in samples {
        let v = h(p_star, &pt.q, pt.t);
        if !(v > evaluator.c) {
            return Err(Error::NotFound(format!(
                "H(p*, q, t) = {v} does not exceed c = {} at t = {}",
                evaluator.c, pt.t
            )));
        }
    }
    let values: Vec<f64> = samples.iter().map(|pt| h(&pt.p, &pt.q, pt.t)).collect();
    for (pt, &v) in samples.iter().zip(&values) {
        if v != 0.0 && !evaluator.in_sector(&pt.p) {
            return Err(Error::NotFound(format!(
                "H = {v} is nonzero outside the sector at p = {:?}",
                pt.p.as_slice()
            )));
        }
    }
    let upper_ok = |s: f64| -> Result<bool> {
        for (pt, &v) in samples.iter().zip(&values) {
            let hs = evaluator.value(s, &pt.p)?;
            let ok = if v != 0.0 { v < hs } else { v <= hs };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let lower_ok = |s: f64| -> Result<bool> {
        for (pt, &v) in samples.iter().zip(&values) {
            let hs = evaluator.value(s, &pt.p)?;
            let ok = if v != 0.0 { hs < v } else { hs <= v };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut s_hi = None;
    let mut s = 1.0;
    while s <= 1024.0 {
        if upper_ok(s)? {
            s_hi = Some(s);
            break;
        }
        s *= 2.0;
    }
    let mut s_lo = None;
    let mut s = -1.0;
    while s >= -1024.0 {
        if lower_ok(s)? {
            s_lo = Some(s);
            break;
        }
        s *= 2.0;
    }
    match (s_lo, s_hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        (lo, hi) => Err(Error::NotFound(format!(
            "no bracket with |s| <= 1024 (lower found: {}, upper found: {})",
            lo.is_some(),
            hi.is_some()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    pub(crate) fn evaluator() -> &'static ProfileEvaluator {
        static E: OnceLock<ProfileEvaluator> = OnceLock::new();
        E.get_or_init(|| {
            let cone = ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap();
            let blocks = Blocks::new(ModelParams::default()).unwrap();
            ProfileEvaluator::new(cone, blocks, 3.0, DEFAULT_EPS_S).unwrap()
        })
    }

    fn y(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn plateau_values() {
        let e = evaluator();
        let one = y(&[1.0, 1.0]);
        assert!((e.f_jet(1.0, &one).value - 4.0).abs() < 1e-12);
        assert!((e.f_jet(-1.0, &one).value - 4.0).abs() < 1e-12);
        let p_star = e.cone.p_star().clone();
        assert!((e.h_tilde(1.5, &p_star).value - 4.5).abs() < 1e-12);
        assert!(e.h_tilde(1.5, &p_star).gradient.amax() < 1e-12);
    }

    #[test]
    fn boundary_and_far_field_vanish() {
        let e = evaluator();
        for s in [-4.0, -1.0, -0.3, 0.0, 0.6, 1.0, 2.5] {
            assert_eq!(e.value(s, &e.cone.from_y(&y(&[0.0, 0.7]))).unwrap(), 0.0);
            assert_eq!(e.value(s, &e.cone.from_y(&y(&[80.0, 80.0]))).unwrap(), 0.0);
        }
    }

    #[test]
    fn smoothing_is_local() {
        let e = evaluator();
        let p = e.cone.from_y(&y(&[0.97, 1.02]));
        for st in SWITCHES {
            let s = st + 2.0 * e.eps_s;
            let a = e.value(s, &p).unwrap();
            let b = e.h_tilde(s, &p).value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = evaluator();
        let d = e.params().d_plateau;
        for s in [1.0005, 2.0, -2.0, 0.5] {
            let shift = if (0.0..1.0).contains(&s) {
                (1.0 - s) * (1.0 - d)
            } else {
                0.0
            };
            let p = e.cone.from_y(&y(&[0.05 + shift, 0.08 + shift]));
            let j = e.h(s, &p).unwrap();
            let h = 1e-7;
            for i in 0..2 {
                let mut pp = p.clone();
                pp[i] += h;
                let mut pm = p.clone();
                pm[i] -= h;
                let fd = (e.value(s, &pp).unwrap() - e.value(s, &pm).unwrap()) / (2.0 * h);
                assert!(
                    (fd - j.gradient[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "s = {s}"
                );
            }
        }
    }
}
