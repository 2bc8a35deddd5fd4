//! The one-dimensional model function, its mollification and the
//! n-dimensional building blocks `U_s`, `V_s`, `W_s`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp;
use crate::jet::{Jet, Jet1};
use crate::mollifier;
use crate::quadrature::{integrate_pieces, Tolerance};

/// Construction constants of the model function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta: f64,
    pub eps: f64,
    pub b_edge: f64,
    pub d_plateau: f64,
    pub grid_step: f64,
}

impl ModelParams {
    pub fn new(delta: f64, eps: f64) -> Result<Self> {
        if !(delta > 0.0 && eps > 0.0) || !delta.is_finite() || !eps.is_finite() {
            return Err(Error::InvalidInput(format!(
                "delta and eps must be positive (delta = {delta}, eps = {eps})"
            )));
        }
        if eps > delta / 100.0 {
            return Err(Error::Precondition(format!(
                "scale separation eps <= delta/100 fails (eps = {eps}, delta = {delta})"
            )));
        }
        let b_edge = (4.0 - 0.5_f64.exp()) * delta.sqrt();
        let d_plateau = b_edge + 6.0 * eps;
        if d_plateau >= 0.5 {
            return Err(Error::Precondition(format!(
                "plateau offset d = {d_plateau} must be below 1/2"
            )));
        }
        Ok(Self {
            delta,
            eps,
            b_edge,
            d_plateau,
            grid_step: (eps / 20.0).min(delta / 200.0),
        })
    }

    /// `d_s = d/|s|`.
    pub fn d_s(&self, s: f64) -> f64 {
        self.d_plateau / s.abs()
    }

    /// The four points where the closed form changes branch.
    pub fn junctions(&self) -> [f64; 4] {
        let r = self.delta.sqrt();
        [0.0, r, self.b_edge - r, self.b_edge]
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new(1e-2, 1e-4).expect("default model parameters are admissible")
    }
}

/// Closed-form model function and its first three (one-sided) derivatives.
/// Right-continuous at the junctions.
pub fn u_hat_derivatives(x: f64, params: &ModelParams) -> [f64; 4] {
    let delta = params.delta;
    let r = delta.sqrt();
    let b = params.b_edge;
    if x < 0.0 {
        [0.0; 4]
    } else if x < r {
        let g = (-x * x / (2.0 * delta)).exp();
        [
            1.0 - g,
            x / delta * g,
            (1.0 / delta - x * x / (delta * delta)) * g,
            (-3.0 * x / (delta * delta) + x.powi(3) / delta.powi(3)) * g,
        ]
    } else if x < b - r {
        let slope = (-0.5_f64).exp() / r;
        [slope * x + 1.0 - 2.0 * (-0.5_f64).exp(), slope, 0.0, 0.0]
    } else if x < b {
        let s = x - b;
        let g = (-s * s / (2.0 * delta)).exp();
        [
            g,
            -s / delta * g,
            (-1.0 / delta + s * s / (delta * delta)) * g,
            (3.0 * s / (delta * delta) - s.powi(3) / delta.powi(3)) * g,
        ]
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

pub fn u_hat(x: f64, params: &ModelParams) -> f64 {
    u_hat_derivatives(x, params)[0]
}

/// Slope of the linear middle branch, `e^{-1/2}/sqrt(delta)`.
pub fn u_hat_derivative_at_turning(params: &ModelParams) -> f64 {
    (-0.5_f64).exp() / params.delta.sqrt()
}

/// Direct convolution of the model function with the kernel at `x`:
/// value and first three derivatives. The second-derivative jumps of the
/// closed form at `0` and `b` contribute point masses to the third.
pub fn convolve_direct(x: f64, params: &ModelParams, tol: Tolerance) -> Result<[f64; 4]> {
    let eps = params.eps;
    let mut breaks = vec![-1.0, 1.0];
    for j in params.junctions() {
        let t = (x - j) / eps;
        if t > -1.0 && t < 1.0 {
            breaks.push(t);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let mut v: [f64; 4] = integrate_pieces(
        |t| {
            let w = mollifier::density(t);
            let d = u_hat_derivatives(x - eps * t, params);
            [w * d[0], w * d[1], w * d[2], w * d[3]]
        },
        &breaks,
        tol,
    )?;
    let jump = 1.0 / params.delta;
    v[3] += jump * mollifier::phi(x, eps) + jump * mollifier::phi(x - params.b_edge, eps);
    Ok(v)
}

/// Tabulated mollified model function on `[-eps, b + eps]`; it is exactly 0
/// to the left and 1 to the right of that interval.
#[derive(Debug, Clone)]
pub struct SmoothCurve {
    x0: f64,
    h: f64,
    nodes: Vec<[f64; 4]>,
}

impl SmoothCurve {
    pub fn build(params: &ModelParams) -> Result<Self> {
        let x0 = -params.eps;
        let x1 = params.b_edge + params.eps;
        let cells = ((x1 - x0) / params.grid_step).ceil() as usize;
        let h = (x1 - x0) / cells as f64;
        let tol = Tolerance {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            max_intervals: 400,
        };
        let mut nodes = Vec::with_capacity(cells + 1);
        for k in 0..=cells {
            let x = x0 + k as f64 * h;
            nodes.push(convolve_direct(x, params, tol)?);
        }
        // the table ends are outside the smoothing zone
        nodes[0] = [0.0; 4];
        nodes[cells] = [1.0, 0.0, 0.0, 0.0];
        Ok(Self { x0, h, nodes })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.h * (self.nodes.len() - 1) as f64)
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, &[f64; 4])> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .map(move |(k, v)| (self.x0 + k as f64 * self.h, v))
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> Jet1 {
        let (lo, hi) = self.support();
        if x <= lo {
            return Jet1::ZERO;
        }
        if x >= hi {
            return Jet1::constant(1.0);
        }
        let (k, t) = interp::locate(x, self.x0, self.h, self.nodes.len());
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let h = self.h;
        let value = interp::quintic(
            t,
            [a[0], h * a[1], h * h * a[2]],
            [b[0], h * b[1], h * h * b[2]],
        );
        let d1 = interp::quintic(
            t,
            [a[1], h * a[2], h * h * a[3]],
            [b[1], h * b[2], h * h * b[3]],
        );
        let d2 = interp::cubic(t, [a[2], h * a[3]], [b[2], h * b[3]]);
        Jet1 { value, d1, d2 }
    }

    /// Third derivative, linearly interpolated.
    pub fn d3(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        let (k, t) = interp::locate(x, self.x0, self.h, self.nodes.len());
        (1.0 - t) * self.nodes[k][3] + t * self.nodes[k + 1][3]
    }

    /// Writes `x,f,df,d2f` rows at the grid nodes.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> std::io::Result<()> {
        writeln!(out, "x,f,df,d2f")?;
        for (x, v) in self.grid().step_by(stride.max(1)) {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", x, v[0], v[1], v[2])?;
        }
        Ok(())
    }
}

/// Outcome of the second-derivative bound scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub passed: bool,
    pub witness: Option<f64>,
    pub points_checked: usize,
}

/// Scans the grid for `u''_eps <= -1/(3 delta)` on `x - b ∈ (-C delta, -eps]`
/// and for monotonicity of `u''_eps` on `B(b, eps)` wherever it is above that
/// bound.
pub fn second_derivative_bound_check(
    curve: &SmoothCurve,
    params: &ModelParams,
    c: f64,
) -> BoundCheck {
    let bound = -1.0 / (3.0 * params.delta);
    let b = params.b_edge;
    let mut checked = 0;
    let pts: Vec<(f64, f64)> = curve.grid().map(|(x, v)| (x, v[2])).collect();
    for &(x, d2) in &pts {
        let s = x - b;
        if s > -c * params.delta && s <= -params.eps {
            checked += 1;
            if d2 > bound {
                return BoundCheck {
                    passed: false,
                    witness: Some(x),
                    points_checked: checked,
                };
            }
        }
    }
    let slack = 1e-10 / params.delta;
    for w in pts.windows(2) {
        let (xa, da) = w[0];
        let (xb, db) = w[1];
        if (xa - b).abs() < params.eps && (xb - b).abs() < params.eps && da >= bound {
            checked += 1;
            if db < da - slack {
                return BoundCheck {
                    passed: false,
                    witness: Some(xa),
                    points_checked: checked,
                };
            }
        }
    }
    BoundCheck {
        passed: true,
        witness: None,
        points_checked: checked,
    }
}

/// The one-dimensional blocks `u, u_s, v_s, w_s` and their products.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub params: ModelParams,
    curve: Arc<SmoothCurve>,
}

impl Blocks {
    pub fn new(params: ModelParams) -> Result<Self> {
        Ok(Self {
            params,
            curve: Arc::new(SmoothCurve::build(&params)?),
        })
    }

    pub fn from_curve(params: ModelParams, curve: Arc<SmoothCurve>) -> Self {
        Self { params, curve }
    }

    pub fn curve(&self) -> &Arc<SmoothCurve> {
        &self.curve
    }

    /// `u(x) = u_eps(x - 3 eps)`.
    pub fn u(&self, x: f64) -> Jet1 {
        self.curve.eval(x - 3.0 * self.params.eps)
    }

    /// `u_s(x) = u(|s| x)`.
    pub fn u_s(&self, s: f64, x: f64) -> Jet1 {
        let m = s.abs();
        self.u(m * x).affine_pullback(m)
    }

    /// `v_s(x) = u_s(x + d_s) = u(|s| x + d)`.
    pub fn v_s(&self, s: f64, x: f64) -> Jet1 {
        let m = s.abs();
        self.u(m * x + self.params.d_plateau).affine_pullback(m)
    }

    /// `w_s(x) = u_s(1 - d_s - |x|)`, with `w_s = w_1` for `|s| < 1`.
    pub fn w_s(&self, s: f64, x: f64) -> Jet1 {
        let m = s.abs().max(1.0);
        let j = self.u(m * (1.0 - x.abs()) - self.params.d_plateau);
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        Jet1 {
            value: j.value,
            d1: -m * sign * j.d1,
            d2: m * m * j.d2,
        }
    }

    /// `U_s(y) = prod u_s(y_i)`.
    pub fn big_u(&self, s: f64, y: &DVector<f64>) -> Jet {
        let f: Vec<Jet1> = y.iter().map(|&yi| self.u_s(s, yi)).collect();
        Jet::separable_product(&f)
    }

    /// `V_s(y) = prod v_s(-|y_i|)`.
    pub fn big_v(&self, s: f64, y: &DVector<f64>) -> Jet {
        let f: Vec<Jet1> = y
            .iter()
            .map(|&yi| {
                let j = self.v_s(s, -yi.abs());
                let sign = if yi < 0.0 { -1.0 } else { 1.0 };
                Jet1 {
                    value: j.value,
                    d1: -sign * j.d1,
                    d2: j.d2,
                }
            })
            .collect();
        Jet::separable_product(&f)
    }

    /// `W_s(y) = w_s(|y|/R)`.
    pub fn big_w(&self, s: f64, y: &DVector<f64>, radius: f64) -> Jet {
        let r = y.norm();
        let j = self.w_s(s, r / radius);
        Jet::radial(
            y,
            Jet1 {
                value: j.value,
                d1: j.d1 / radius,
                d2: j.d2 / (radius * radius),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn blocks() -> &'static Blocks {
        static B: OnceLock<Blocks> = OnceLock::new();
        B.get_or_init(|| Blocks::new(ModelParams::default()).unwrap())
    }

    #[test]
    fn params_invariants() {
        let p = ModelParams::default();
        assert!((p.b_edge - (4.0 - 0.5_f64.exp()) * 0.1).abs() < 1e-14);
        assert_eq!(p.d_plateau, p.b_edge + 6.0 * p.eps);
        assert!(ModelParams::new(1e-2, 1e-3).is_err());
        assert!(ModelParams::new(0.02, 1e-4).is_ok());
        assert!(ModelParams::new(0.05, 1e-4).is_err());
    }

    #[test]
    fn closed_form_values() {
        let p = ModelParams::default();
        assert_eq!(u_hat(-0.1, &p), 0.0);
        assert!((u_hat(0.1, &p) - (1.0 - (-0.5_f64).exp())).abs() < 1e-15);
        assert_eq!(u_hat(p.b_edge + 1.0, &p), 1.0);
        assert!((u_hat_derivative_at_turning(&p) - 6.065_306_597_126_334).abs() < 1e-12);
    }

    #[test]
    fn junctions_are_c1() {
        let p = ModelParams::default();
        for j in p.junctions() {
            let left = u_hat_derivatives(j - 1e-300_f64.max(j.abs() * f64::EPSILON), &p);
            let right = u_hat_derivatives(j, &p);
            assert!((left[0] - right[0]).abs() < 1e-12, "value at {j}");
            assert!(
                (left[1] - right[1]).abs() < 1e-12 * (1.0 + right[1].abs()),
                "slope at {j}"
            );
        }
    }

    #[test]
    fn table_matches_convolution_off_grid() {
        let b = blocks();
        let p = b.params;
        let curve = b.curve();
        let h = curve.step();
        let tol = Tolerance::default();
        for k in 0..60 {
            let x = -p.eps + (k as f64 + 0.37) * (p.b_edge + 2.0 * p.eps) / 60.0 + 0.3 * h;
            let direct = convolve_direct(x, &p, tol).unwrap();
            let j = curve.eval(x);
            assert!((j.value - direct[0]).abs() < 1e-10, "x = {x}");
            assert!((j.d1 - direct[1]).abs() < 1e-8 * (1.0 + direct[1].abs()));
            assert!((j.d2 - direct[2]).abs() < 1e-6 * (1.0 + direct[2].abs()));
        }
    }

    #[test]
    fn block_plateaus() {
        let b = blocks();
        let p = b.params;
        assert_eq!(b.u(0.0).value, 0.0);
        assert_eq!(b.u(p.b_edge + 6.0 * p.eps).value, 1.0);
        // plateau starts at b + 4 eps already
        assert_eq!(b.u(p.b_edge + 4.0 * p.eps + 1e-12).value, 1.0);
        assert_eq!(b.u_s(2.0, p.d_plateau / 2.0).value, 1.0);
        let w = b.w_s(1.0, 1.0 - p.d_plateau / 2.0).value;
        assert!((0.0..1.0).contains(&w));
        assert_eq!(b.w_s(1.0, 1.0 - 2.0 * p.d_plateau).value, 1.0);
        assert_eq!(b.w_s(3.0, 1.0 - p.d_s(3.0)).value, 0.0);
    }

    #[test]
    fn bound_check_holds_at_default_scale() {
        let b = blocks();
        let r = second_derivative_bound_check(b.curve(), &b.params, 2.0);
        assert!(r.passed, "{r:?}");
        assert!(r.points_checked > 1000);
    }
}
