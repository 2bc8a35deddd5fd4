//! Open simplicial cones `C = {A c : c > 0}`, their duals and the
//! p*-normalised generator matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A simplicial cone with an interior base point and a cut-off radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    p_star: DVector<f64>,
    a_norm: DMatrix<f64>,
    a_norm_inv: DMatrix<f64>,
    radius: f64,
}

/// Largest accepted condition number of the generator matrix.
pub const MAX_CONDITION: f64 = 1e8;

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl ConeSpec {
    pub fn new(a: DMatrix<f64>, p_star: DVector<f64>, radius: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || p_star.len() != n {
            return Err(Error::InvalidInput(format!(
                "generator matrix must be square and match p* (got {}x{}, |p*| = {})",
                a.nrows(),
                a.ncols(),
                p_star.len()
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let scale = a.norm();
        let det = a.determinant();
        if !(det.abs() > 1e-12 * scale.powi(n as i32)) {
            return Err(Error::SingularMatrix(format!(
                "|det A| = {:.3e}",
                det.abs()
            )));
        }
        let cond = condition_number(&a);
        if cond > MAX_CONDITION {
            return Err(Error::IllConditioned(cond));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("inverse failed".into()))?;
        let y_star = &a_inv * &p_star;
        if let Some(i) = y_star.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Precondition(format!(
                "p* is not interior to the cone: coefficient {i} of A^-1 p* is {}",
                y_star[i]
            )));
        }
        let a_norm = &a * DMatrix::from_diagonal(&y_star);
        let a_norm_inv = DMatrix::from_diagonal(&y_star.map(|v| 1.0 / v)) * &a_inv;
        Ok(Self {
            a,
            a_inv,
            p_star,
            a_norm,
            a_norm_inv,
            radius,
        })
    }

    /// The cone of the Arnold problem, spanned by `(1,-1)` and `(1,1)`.
    pub fn arnold(p_star: DVector<f64>, radius: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]),
            p_star,
            radius,
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn p_star(&self) -> &DVector<f64> {
        &self.p_star
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `𝐀 = A diag(A^-1 p*)`.
    pub fn a_norm(&self) -> &DMatrix<f64> {
        &self.a_norm
    }

    pub fn a_norm_inv(&self) -> &DMatrix<f64> {
        &self.a_norm_inv
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.p_star.clone(), radius)
    }

    /// Cone coordinates `y = 𝐀^-1 p`.
    pub fn to_y(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.a_norm_inv * p
    }

    pub fn from_y(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a_norm * y
    }

    /// Columns `(A^T)^-1 e_i`, generators of the dual cone.
    pub fn dual_cone_basis(&self) -> DMatrix<f64> {
        self.a_inv.transpose()
    }

    /// Open-cone membership: every coefficient of `A^-1 x` is positive.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (&self.a_inv * x).iter().all(|&c| c > 0.0)
    }

    /// Open dual-cone membership: `<alpha, v_i> > 0` for every generator.
    pub fn in_dual_cone(&self, alpha: &HomologyClass) -> bool {
        (self.a.transpose() * alpha.as_real())
            .iter()
            .all(|&c| c > 0.0)
    }

    /// `β = 𝐀^T alpha`.
    pub fn beta(&self, alpha: &HomologyClass) -> DVector<f64> {
        self.a_norm.transpose() * alpha.as_real()
    }

    /// `<p*, alpha>`.
    pub fn pairing(&self, alpha: &HomologyClass) -> f64 {
        self.p_star.dot(&alpha.as_real())
    }

    /// Checks the hypotheses `alpha ∈ C*` and `<p*, alpha> <= c` of the
    /// corner existence statement.
    pub fn check_existence_hypotheses(&self, alpha: &HomologyClass, c: f64) -> Result<()> {
        if alpha.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "class has dimension {} but the cone has dimension {}",
                alpha.dim(),
                self.dim()
            )));
        }
        if !self.in_dual_cone(alpha) {
            return Err(Error::Precondition(format!(
                "alpha = {:?} is not in the open dual cone",
                alpha.0
            )));
        }
        let pair = self.pairing(alpha);
        if pair > c {
            return Err(Error::Precondition(format!(
                "<p*, alpha> = {pair} exceeds c = {c}"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ConeJson {
    n: usize,
    #[serde(rename = "A")]
    a: Vec<f64>,
    p_star: Vec<f64>,
    #[serde(rename = "R")]
    radius: f64,
}

impl Serialize for ConeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(self.a[(i, j)]);
            }
        }
        ConeJson {
            n,
            a,
            p_star: self.p_star.iter().copied().collect(),
            radius: self.radius,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConeSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ConeJson::deserialize(d)?;
        if raw.a.len() != raw.n * raw.n {
            return Err(serde::de::Error::custom(format!(
                "A has {} entries, expected {}",
                raw.a.len(),
                raw.n * raw.n
            )));
        }
        ConeSpec::new(
            DMatrix::from_row_slice(raw.n, raw.n, &raw.a),
            DVector::from_vec(raw.p_star),
            raw.radius,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// A nonzero integer homology class of the torus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct HomologyClass(Vec<i64>);

impl HomologyClass {
    pub fn new(alpha: Vec<i64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().all(|&a| a == 0) {
            return Err(Error::InvalidInput(format!(
                "homology class must be nonzero, got {alpha:?}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn as_real(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&a| a as f64))
    }
}

impl TryFrom<Vec<i64>> for HomologyClass {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HomologyClass> for Vec<i64> {
    fn from(h: HomologyClass) -> Self {
        h.0
    }
}

impl std::fmt::Display for HomologyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arnold() -> ConeSpec {
        ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap()
    }

    fn class(v: &[i64]) -> HomologyClass {
        HomologyClass::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_cone_is_self_dual() {
        let c = ConeSpec::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
            10.0,
        )
        .unwrap();
        assert_eq!(c.dual_cone_basis(), DMatrix::identity(2, 2));
        assert!(c.contains(&DVector::from_vec(vec![1.0, 2.0])));
        assert!(c.in_dual_cone(&class(&[1, 1])));
    }

    #[test]
    fn arnold_dual_basis() {
        let d = arnold().dual_cone_basis();
        let expected = DMatrix::from_column_slice(2, 2, &[0.5, -0.5, 0.5, 0.5]);
        assert!((d - expected).amax() < 1e-15);
    }

    #[test]
    fn arnold_membership() {
        let c = arnold();
        assert!(c.contains(&DVector::from_vec(vec![1.0, 0.0])));
        assert!(!c.contains(&DVector::from_vec(vec![0.0, 1.0])));
        assert!(c.in_dual_cone(&class(&[1, 0])));
        assert!(!c.in_dual_cone(&class(&[1, 1])));
        assert!(!c.in_dual_cone(&class(&[0, 1])));
    }

    #[test]
    fn normalisation_maps_p_star_to_ones() {
        let c = ConeSpec::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 1.5]),
            DVector::from_vec(vec![1.0, 0.7]),
            5.0,
        )
        .unwrap();
        let y = c.to_y(c.p_star());
        assert!((y - DVector::from_element(2, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            ConeSpec::new(
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
                p.clone(),
                1.0
            ),
            Err(Error::SingularMatrix(_))
        ));
        assert!(matches!(
            ConeSpec::new(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-9]),
                p.clone(),
                1.0
            ),
            Err(Error::IllConditioned(_))
        ));
        assert!(matches!(
            ConeSpec::new(
                DMatrix::identity(2, 2),
                DVector::from_vec(vec![1.0, -1.0]),
                1.0
            ),
            Err(Error::Precondition(_))
        ));
        assert!(HomologyClass::new(vec![0, 0]).is_err());
    }

    #[test]
    fn existence_hypotheses() {
        let c = arnold();
        assert!(c.check_existence_hypotheses(&class(&[1, 0]), 3.0).is_ok());
        assert!(c.check_existence_hypotheses(&class(&[2, 1]), 3.0).is_err());
        assert!(c.check_existence_hypotheses(&class(&[0, 1]), 3.0).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = arnold();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"A\":[1.0,1.0,-1.0,1.0]"));
        let back: ConeSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
