//! Globally adaptive Gauss–Kronrod (7/15) quadrature over scalar and
//! vector-valued integrands.

use nalgebra::DVector;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// A value that can be accumulated by the quadrature rule.
pub trait QuadValue: Clone {
    fn zeros_like(&self) -> Self;
    fn axpy(&mut self, w: f64, x: &Self);
    fn max_abs(&self) -> f64;
    fn max_abs_diff(&self, other: &Self) -> f64;
}

impl QuadValue for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        *self += w * x;
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
}

impl<const N: usize> QuadValue for [f64; N] {
    fn zeros_like(&self) -> Self {
        [0.0; N]
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x) {
            *a += w * b;
        }
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl QuadValue for DVector<f64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        self.axpy(w, x, 1.0);
    }
    fn max_abs(&self) -> f64 {
        self.amax()
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).amax()
    }
}

/// Tolerances for [`integrate`]. The integral is accepted once the summed
/// error estimate drops below `max(abs_tol, rel_tol * |I|_inf)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            ..Self::default()
        }
    }
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn kronrod<T, F>(f: &mut F, a: f64, b: f64) -> (T, f64)
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = fc.zeros_like();
    let mut g = fc.zeros_like();
    k.axpy(WGK[7], &fc);
    g.axpy(WG[3], &fc);
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        k.axpy(WGK[j], &f1);
        k.axpy(WGK[j], &f2);
        if j % 2 == 1 {
            g.axpy(WG[j / 2], &f1);
            g.axpy(WG[j / 2], &f2);
        }
    }
    let mut kv = k.zeros_like();
    kv.axpy(half, &k);
    let mut gv = g.zeros_like();
    gv.axpy(half, &g);
    let err = kv.max_abs_diff(&gv);
    (kv, err)
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let (value, error) = kronrod(&mut f, a, b);
    if a == b {
        return Ok(value.zeros_like());
    }
    let mut panels = vec![Panel { a, b, value, error }];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        let mut total = panels[0].value.zeros_like();
        for p in &panels {
            total.axpy(1.0, &p.value);
        }
        let scale = total.max_abs();
        let target = tol.abs_tol.max(tol.rel_tol * scale);
        // below this the estimate is dominated by rounding
        let floor = 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        if total_err <= target || total_err <= floor {
            return Ok(total);
        }
        if panels.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                a,
                b,
                tol: target,
                estimate: total_err,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let Panel { a: pa, b: pb, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::Quadrature {
                a,
                b,
                tol: target,
                estimate: total_err,
            });
        }
        let (v1, e1) = kronrod(&mut f, pa, mid);
        let (v2, e2) = kronrod(&mut f, mid, pb);
        panels.push(Panel {
            a: pa,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b: pb,
            value: v2,
            error: e2,
        });
    }
}

/// Integrates over consecutive sub-intervals delimited by `breaks` (sorted,
/// first and last being the integration limits), with the tolerance shared
/// evenly between the pieces.
pub fn integrate_pieces<T, F>(mut f: F, breaks: &[f64], tol: Tolerance) -> Result<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    let piece_tol = Tolerance {
        abs_tol: tol.abs_tol / pieces,
        ..tol
    };
    let mut total: Option<T> = None;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let v = integrate(&mut f, w[0], w[1], piece_tol)?;
        match total.as_mut() {
            Some(t) => t.axpy(1.0, &v),
            None => total = Some(v),
        }
    }
    match total {
        Some(t) => Ok(t),
        None => {
            let a = breaks.first().copied().unwrap_or(0.0);
            let probe = f(a);
            Ok(probe.zeros_like())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v: f64 =
            integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn bump_needs_subdivision() {
        let v: f64 = integrate(
            |x: f64| {
                if x.abs() < 1.0 {
                    (1.0 / (x * x - 1.0)).exp()
                } else {
                    0.0
                }
            },
            -1.0,
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v - 0.443_993_816_168_079_4).abs() < 1e-13);
    }

    #[test]
    fn vector_integrand() {
        let v: [f64; 2] = integrate(
            |x: f64| [x.sin(), x.cos()],
            0.0,
            std::f64::consts::PI,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v[0] - 2.0).abs() < 1e-13);
        assert!(v[1].abs() < 1e-13);
    }

    #[test]
    fn impossible_tolerance_is_reported() {
        let tol = Tolerance {
            abs_tol: 1e-30,
            rel_tol: 0.0,
            max_intervals: 8,
        };
        let r: Result<f64> = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, tol);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
