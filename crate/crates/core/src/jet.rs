//! Second-order jets: value, gradient and Hessian carried together so that
//! products and chain rules stay consistent.

use nalgebra::{DMatrix, DVector};

use crate::quadrature::QuadValue;

/// Value and first two derivatives of a function of one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet1 {
    pub const ZERO: Jet1 = Jet1 {
        value: 0.0,
        d1: 0.0,
        d2: 0.0,
    };

    pub fn constant(value: f64) -> Self {
        Self {
            value,
            d1: 0.0,
            d2: 0.0,
        }
    }

    /// Jet of `x -> f(a x + c)` given the jet of `f` at `a x + c`.
    pub fn affine_pullback(self, a: f64) -> Self {
        Self {
            value: self.value,
            d1: a * self.d1,
            d2: a * a * self.d2,
        }
    }
}

/// Value, gradient and Hessian of a scalar function on R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: DVector::zeros(n),
            hessian: DMatrix::zeros(n, n),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            value,
            ..Self::zero(n)
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// Jet of the separable product `prod_i f_i(y_i)`.
    pub fn separable_product(factors: &[Jet1]) -> Self {
        let n = factors.len();
        let mut jet = Self::zero(n);
        // product of all values except those in `skip`
        let rest = |skip: &[usize]| -> f64 {
            factors
                .iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, f)| f.value)
                .product()
        };
        jet.value = rest(&[]);
        for i in 0..n {
            let others = rest(&[i]);
            jet.gradient[i] = factors[i].d1 * others;
            jet.hessian[(i, i)] = factors[i].d2 * others;
            for j in (i + 1)..n {
                let h = factors[i].d1 * factors[j].d1 * rest(&[i, j]);
                jet.hessian[(i, j)] = h;
                jet.hessian[(j, i)] = h;
            }
        }
        jet
    }

    /// Jet of `g(|y|)` for a radial profile `g` with jet `radial` at `|y|`.
    pub fn radial(y: &DVector<f64>, radial: Jet1) -> Self {
        let n = y.len();
        let r = y.norm();
        let mut jet = Self::constant(n, radial.value);
        if r == 0.0 {
            // smooth radial functions have g'(0) = 0
            jet.hessian = DMatrix::identity(n, n) * radial.d2;
            return jet;
        }
        let unit = y / r;
        jet.gradient = &unit * radial.d1;
        jet.hessian = &unit * unit.transpose() * (radial.d2 - radial.d1 / r)
            + DMatrix::identity(n, n) * (radial.d1 / r);
        jet
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.value *= k;
        self.gradient *= k;
        self.hessian *= k;
        self
    }

    pub fn add_scaled(&mut self, k: f64, other: &Jet) {
        self.value += k * other.value;
        self.gradient.axpy(k, &other.gradient, 1.0);
        self.hessian += &other.hessian * k;
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let g = &self.gradient * other.value + &other.gradient * self.value;
        let h = &self.hessian * other.value
            + &other.hessian * self.value
            + &self.gradient * other.gradient.transpose()
            + &other.gradient * self.gradient.transpose();
        Jet {
            value: self.value * other.value,
            gradient: g,
            hessian: h,
        }
    }

    /// Jet of `x -> f(M x)` where `self` is the jet of `f` at `M x`.
    pub fn linear_pullback(&self, m: &DMatrix<f64>) -> Jet {
        Jet {
            value: self.value,
            gradient: m.transpose() * &self.gradient,
            hessian: m.transpose() * &self.hessian * m,
        }
    }

    /// Composition `phi(self)` for a univariate `phi` with jet `outer` at `self.value`.
    pub fn compose(&self, outer: Jet1) -> Jet {
        Jet {
            value: outer.value,
            gradient: &self.gradient * outer.d1,
            hessian: &self.hessian * outer.d1
                + &self.gradient * self.gradient.transpose() * outer.d2,
        }
    }

    /// Flattens into `[value, gradient, hessian (column-major)]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(1 + n + n * n);
        v[0] = self.value;
        v.rows_mut(1, n).copy_from(&self.gradient);
        for (k, h) in self.hessian.iter().enumerate() {
            v[1 + n + k] = *h;
        }
        v
    }

    pub fn from_flat(v: &DVector<f64>, n: usize) -> Jet {
        Jet {
            value: v[0],
            gradient: v.rows(1, n).into_owned(),
            hessian: DMatrix::from_iterator(n, n, v.iter().skip(1 + n).copied()),
        }
    }
}

impl QuadValue for Jet {
    fn zeros_like(&self) -> Self {
        Jet::zero(self.dim())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        self.add_scaled(w, x);
    }
    fn max_abs(&self) -> f64 {
        self.value
            .abs()
            .max(self.gradient.amax())
            .max(self.hessian.amax())
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.value - other.value)
            .abs()
            .max((&self.gradient - &other.gradient).amax())
            .max((&self.hessian - &other.hessian).amax())
    }
}
