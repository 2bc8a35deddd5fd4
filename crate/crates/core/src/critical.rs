//! Critical points of the shifted action `p ↦ H_s(p) - <p, alpha>`, their
//! Hessian spectra and actions, and the Morse-Bott data of Liouville tori.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::HomologyClass;
use crate::error::{Error, Result};
use crate::model::{u_hat_derivatives, Blocks, ModelParams};
use crate::profile::ProfileEvaluator;

/// Solver settings for the critical-point Newton iteration.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub uniqueness_seeds: usize,
    pub minus_seeds: usize,
    pub seed: u64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 80,
            tolerance: 1e-12,
            uniqueness_seeds: 20,
            minus_seeds: 100,
            seed: 0x5eed,
        }
    }
}

/// Secondary solution of `DH_s = alpha` located by multistart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinusCandidate {
    pub p: Vec<f64>,
    pub h_value: f64,
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub s: f64,
    pub alpha: HomologyClass,
    pub p_plus: Vec<f64>,
    pub y_plus: Vec<f64>,
    pub h_value: f64,
    pub gradient_residual: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub action_value: f64,
    pub threshold: f64,
    pub newton_iterations: usize,
    pub uniqueness_spread: f64,
    pub minus_candidates: Vec<MinusCandidate>,
    pub residual_ok: bool,
    pub negative_definite: bool,
    pub action_ok: bool,
    pub minus_ok: bool,
    pub unique: bool,
}

impl CriticalPointReport {
    pub fn all_ok(&self) -> bool {
        self.residual_ok && self.negative_definite && self.action_ok && self.minus_ok && self.unique
    }
}

struct Solve {
    y: DVector<f64>,
    residual: f64,
    iterations: usize,
}

/// Newton iteration on `∇_y H_s(y) = β` with a capped step and
/// backtracking on `|∇_p H_s - alpha|^2`.
fn newton(
    ev: &ProfileEvaluator,
    s: f64,
    beta: &DVector<f64>,
    y0: DVector<f64>,
    cap: f64,
    concave: bool,
    opts: &NewtonOptions,
) -> Result<Solve> {
    let to_p = ev.cone.a_norm_inv().transpose();
    let residual = |y: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
        let j = ev.h_y(s, y)?;
        let r = &j.gradient - beta;
        let rp = (&to_p * &r).norm();
        Ok((r, j.hessian, rp))
    };
    let mut y = y0;
    let (mut r, mut hess, mut res) = residual(&y)?;
    for it in 0..opts.max_iterations {
        if res < opts.tolerance {
            return Ok(Solve {
                y,
                residual: res,
                iterations: it,
            });
        }
        let Some(step) = hess.clone().lu().solve(&(-&r)) else {
            return Err(Error::NoConvergence(format!(
                "singular Hessian at iteration {it}"
            )));
        };
        if !step.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence(format!(
                "non-finite step at iteration {it}"
            )));
        }
        let norm = step.norm();
        let step = if norm > cap {
            step * (cap / norm)
        } else {
            step
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &y + &step * lambda;
            let (rt, ht, rest) = residual(&trial)?;
            if concave && !negative_definite(&ht) {
                lambda *= 0.5;
                continue;
            }
            if rest < res * (1.0 - 1e-4 * lambda) || (rest <= res && rest < 1e3 * opts.tolerance) {
                y = trial;
                r = rt;
                hess = ht;
                res = rest;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if res < 1e-10 {
                // stalled at rounding level
                return Ok(Solve {
                    y,
                    residual: res,
                    iterations: it,
                });
            }
            return Err(Error::NoConvergence(format!(
                "line search failed at iteration {it} (residual {res:.3e})"
            )));
        }
    }
    if res < opts.tolerance.max(1e-10) {
        Ok(Solve {
            y,
            residual: res,
            iterations: opts.max_iterations,
        })
    } else {
        Err(Error::NoConvergence(format!(
            "residual {res:.3e} after {} iterations",
            opts.max_iterations
        )))
    }
}

fn negative_definite(h: &DMatrix<f64>) -> bool {
    h.clone().cholesky().is_none() && (-h).cholesky().is_some()
}

/// Radius `ρ < sqrt(δ)` with `ρ exp(-ρ²/(2δ)) = δ g`.
fn gaussian_radius(g: f64, delta: f64) -> Option<f64> {
    let target = delta * g;
    let f = |r: f64| r * (-r * r / (2.0 * delta)).exp() - target;
    let (mut lo, mut hi) = (0.0, delta.sqrt());
    if f(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Affine change of variables between the scaled problem `∇U_1(z) = β/κ`
/// and cone coordinates `y`, for each regime of `s`.
struct Reduction {
    kappa: f64,
    scale: f64,
    shift: f64,
}

impl Reduction {
    fn new(ev: &ProfileEvaluator, s: f64) -> Self {
        let c = ev.c;
        let d = ev.params().d_plateau;
        if s >= 1.0 {
            Self {
                kappa: s * (c + s),
                scale: 1.0 / s,
                shift: 0.0,
            }
        } else if s >= 0.0 {
            Self {
                kappa: c + 1.0,
                scale: 1.0,
                shift: (1.0 - s) * (1.0 - d),
            }
        } else if s >= -1.0 {
            Self {
                kappa: c + 1.0,
                scale: 1.0,
                shift: 1.0 - d,
            }
        } else {
            let m = -s;
            Self {
                kappa: m * (c + m),
                scale: 1.0 / m,
                shift: 1.0 - d / m,
            }
        }
    }

    fn to_y(&self, z: &DVector<f64>) -> DVector<f64> {
        z.map(|v| self.scale * v + self.shift)
    }
}

fn gaussian_seed(params: &ModelParams, g: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let top = params.b_edge + 3.0 * params.eps;
    let rho = gaussian_radius(g.norm(), params.delta)?;
    let dir = g / g.norm();
    Some((DVector::from_element(g.len(), top) - dir * rho, rho))
}

/// Locates `p_s^+` and certifies the bullets of the location lemma.
pub fn find_plus_point(
    ev: &ProfileEvaluator,
    s: f64,
    alpha: &HomologyClass,
    opts: &NewtonOptions,
) -> Result<CriticalPointReport> {
    if !ev.cone.in_dual_cone(alpha) {
        return Err(Error::Precondition(format!(
            "alpha = {alpha} is not in the open dual cone"
        )));
    }
    let params = *ev.params();
    let beta = ev.cone.beta(alpha);
    let red = Reduction::new(ev, s);
    let g = &beta / red.kappa;
    let coverage = 1.0 / (std::f64::consts::E * params.delta).sqrt();
    if g.norm() >= coverage {
        return Err(Error::Precondition(format!(
            "|β|/κ = {:.4} exceeds the covered gradient range {coverage:.4}",
            g.norm()
        )));
    }
    let (z0, _) = gaussian_seed(&params, &g)
        .ok_or_else(|| Error::Precondition("gradient outside the Gaussian range".into()))?;
    let cap = 0.5 * params.delta.sqrt() * red.scale;
    let main = newton(ev, s, &beta, red.to_y(&z0), cap, true, opts)?;

    // uniqueness: perturbed seeds in the concave core of the Gaussian cap,
    // kept 2 eps clear of the corner images
    let top = params.b_edge + 3.0 * params.eps;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ s.to_bits());
    let n = beta.len();
    let root = params.delta.sqrt();
    let seeds: Vec<DVector<f64>> = (0..opts.uniqueness_seeds)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| top - root * rng.gen_range(0.05..0.5));
            red.to_y(&z)
        })
        .collect();
    let others: Vec<Result<Solve>> = seeds
        .into_par_iter()
        .map(|y0| newton(ev, s, &beta, y0, cap, true, opts))
        .collect();
    let mut spread: f64 = 0.0;
    let mut unique = true;
    for o in &others {
        match o {
            Ok(sol) => {
                spread = spread.max((ev.cone.from_y(&sol.y) - ev.cone.from_y(&main.y)).norm())
            }
            Err(_) => unique = false,
        }
    }
    unique &= spread < 1e-7;

    let y = main.y.clone();
    let p = ev.cone.from_y(&y);
    let jet = ev.h(s, &p)?;
    let eig = nalgebra::SymmetricEigen::new(jet.hessian.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let action = action_of_torus(jet.value, &p, alpha);
    let threshold = ev.c - ev.cone.pairing(alpha);
    let minus = find_minus_candidates(ev, s, alpha, &y, opts)?;
    let minus_ok = minus.iter().all(|m| m.action < 0.0);
    Ok(CriticalPointReport {
        s,
        alpha: alpha.clone(),
        p_plus: p.iter().copied().collect(),
        y_plus: y.iter().copied().collect(),
        h_value: jet.value,
        gradient_residual: main.residual,
        residual_ok: main.residual < 1e-9,
        negative_definite: eigenvalues.last().is_some_and(|&l| l < -1e-8),
        hessian_eigenvalues: eigenvalues,
        action_ok: action > threshold,
        action_value: action,
        threshold,
        newton_iterations: main.iterations,
        uniqueness_spread: spread,
        minus_candidates: minus,
        minus_ok,
        unique,
    })
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Multistart search for solutions of `DH_s = alpha` other than `p^+`, from
/// quasi-random seeds in the box `(0, 2)^n` of cone coordinates. Results are
/// deduplicated and sorted by action.
pub fn find_minus_candidates(
    ev: &ProfileEvaluator,
    s: f64,
    alpha: &HomologyClass,
    y_plus: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<Vec<MinusCandidate>> {
    let n = ev.dim();
    let beta = ev.cone.beta(alpha);
    let cap = 0.5 * ev.params().delta.sqrt() / s.abs().max(1.0);
    let seeds: Vec<DVector<f64>> = (1..=opts.minus_seeds)
        .map(|k| DVector::from_fn(n, |i, _| 2.0 * halton(k, PRIMES[i % PRIMES.len()])))
        .collect();
    let found: Vec<DVector<f64>> = seeds
        .into_par_iter()
        .filter_map(|y0| newton(ev, s, &beta, y0, cap, false, opts).ok())
        .filter(|sol| sol.residual < 1e-9)
        .map(|sol| sol.y)
        .collect();
    let mut out: Vec<(DVector<f64>, MinusCandidate)> = Vec::new();
    for y in found {
        if (&y - y_plus).norm() < 1e-6 || out.iter().any(|(o, _)| (o - &y).norm() < 1e-6) {
            continue;
        }
        let p = ev.cone.from_y(&y);
        let h = ev.value(s, &p)?;
        out.push((
            y,
            MinusCandidate {
                p: p.iter().copied().collect(),
                h_value: h,
                action: action_of_torus(h, &p, alpha),
            },
        ));
    }
    let mut list: Vec<MinusCandidate> = out.into_iter().map(|(_, m)| m).collect();
    list.sort_by(|a, b| {
        a.action.total_cmp(&b.action).then_with(|| {
            a.p.iter()
                .zip(&b.p)
                .fold(std::cmp::Ordering::Equal, |o, (x, y)| {
                    o.then(x.total_cmp(y))
                })
        })
    });
    Ok(list)
}

/// Gap `H_s(p̂) - H_s(p^+) - <p̂ - p^+, alpha>` where `p̂` is the plateau
/// point nearest `p^+` in the scaled coordinates.
pub fn concavity_gap(ev: &ProfileEvaluator, report: &CriticalPointReport) -> Result<f64> {
    let s = report.s;
    let red = Reduction::new(ev, s);
    let params = ev.params();
    let y = DVector::from_vec(report.y_plus.clone());
    let onset = params.b_edge + 4.0 * params.eps;
    let z = y.map(|v| (v - red.shift) / red.scale);
    let z_hat = z.map(|v| v.max(onset));
    let y_hat = red.to_y(&z_hat);
    let p_hat = ev.cone.from_y(&y_hat);
    let p = ev.cone.from_y(&y);
    let alpha = report.alpha.as_real();
    Ok(ev.value(s, &p_hat)? - ev.value(s, &p)? - (&p_hat - &p).dot(&alpha))
}

/// `H - <p0, alpha>`.
pub fn action_of_torus(h_value: f64, p0: &DVector<f64>, alpha: &HomologyClass) -> f64 {
    h_value - p0.dot(&alpha.as_real())
}

/// Result of the gradient-coverage scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheck {
    pub passed: bool,
    pub targets: usize,
    pub converged: usize,
    pub max_residual: f64,
    pub max_modulus_error: f64,
    pub witness: Option<Vec<f64>>,
}

/// Closed-form `Û(y) = exp(-|y - b 1|²/(2δ))` with gradient and Hessian.
fn gaussian_cap(y: &DVector<f64>, params: &ModelParams) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = y.len();
    let w = y.map(|v| v - params.b_edge);
    let delta = params.delta;
    let u = (-w.norm_squared() / (2.0 * delta)).exp();
    let g = &w * (-u / delta);
    let h = (&w * w.transpose() / (delta * delta) - DMatrix::identity(n, n) / delta) * u;
    (u, g, h)
}

/// Newton on `DÛ(y) = g` for a 20x20 polar grid of targets in the sub-cone
/// of the first quadrant of radius `fraction (eδ)^{-1/2}`, plus the modulus
/// identity on level sets.
pub fn gradient_range_claim_check(params: &ModelParams, fraction: f64) -> Result<CoverageCheck> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = 2;
    let delta = params.delta;
    let b = params.b_edge;
    let r = 1.0 / (std::f64::consts::E * delta).sqrt();
    let grid = 20;
    let mut converged = 0;
    let mut max_residual: f64 = 0.0;
    let mut witness = None;
    for i in 0..grid {
        for j in 0..grid {
            let rad = fraction * r * (i as f64 + 1.0) / (grid as f64 + 1.0);
            let th = std::f64::consts::FRAC_PI_2 * (j as f64 + 1.0) / (grid as f64 + 1.0);
            let target = DVector::from_vec(vec![rad * th.cos(), rad * th.sin()]);
            let mut y = DVector::from_element(n, b);
            let mut res = f64::INFINITY;
            for _ in 0..100 {
                let (_, g, h) = gaussian_cap(&y, params);
                let rvec = &g - &target;
                res = rvec.norm();
                if res < 1e-13 {
                    break;
                }
                let Some(step) = h.lu().solve(&(-&rvec)) else {
                    break;
                };
                let mut lambda = 1.0;
                for _ in 0..40 {
                    let trial = &y + &step * lambda;
                    let (_, gt, _) = gaussian_cap(&trial, params);
                    if (&gt - &target).norm() < res {
                        y = trial;
                        break;
                    }
                    lambda *= 0.5;
                }
            }
            let (_, g, _) = gaussian_cap(&y, params);
            res = res.min((&g - &target).norm());
            let inside = (&y - DVector::from_element(n, b)).norm() < delta.sqrt()
                && y.iter().all(|&v| v < b);
            max_residual = max_residual.max(res);
            if res < 1e-9 && inside {
                converged += 1;
            } else if witness.is_none() {
                witness = Some(target.iter().copied().collect());
            }
        }
    }
    // moduli on level sets, with the gradient assembled from the
    // one-dimensional branches
    let mut max_modulus_error: f64 = 0.0;
    for k in 1..20 {
        let level = (-0.5_f64).exp() + (1.0 - (-0.5_f64).exp()) * k as f64 / 20.0;
        for l in 1..10 {
            let th = std::f64::consts::FRAC_PI_2 * l as f64 / 10.0;
            let radius = (2.0 * delta * (-level.ln())).sqrt();
            let y = [b - radius * th.cos(), b - radius * th.sin()];
            let d0 = u_hat_derivatives(y[0], params);
            let d1 = u_hat_derivatives(y[1], params);
            let grad = [d0[1] * d1[0], d0[0] * d1[1]];
            let modulus = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
            let formula = level * (2.0 * (-level.ln()) / delta).sqrt();
            max_modulus_error = max_modulus_error.max((modulus - formula).abs() / formula);
        }
    }
    let targets = grid * grid;
    Ok(CoverageCheck {
        passed: converged == targets && max_modulus_error < 1e-8,
        targets,
        converged,
        max_residual,
        max_modulus_error,
        witness,
    })
}

/// Diagonal dominance and negative definiteness of `D²U_1(y)`, provided
/// `DU_1(y)` lies in the open quadrant sub-cone of radius `r_prime`.
pub fn hessian_dominance_check(blocks: &Blocks, y: &DVector<f64>, r_prime: f64) -> bool {
    let jet = blocks.big_u(1.0, y);
    let g = &jet.gradient;
    if !(g.iter().all(|&v| v > 0.0) && g.norm() < r_prime) {
        return false;
    }
    let h = &jet.hessian;
    let n = y.len();
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| h[(i, j)].abs()).sum();
        if !(h[(i, i)].abs() > off) {
            return false;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    eig.eigenvalues.iter().all(|&l| l < 0.0)
}

/// Nondegeneracy of the fibre Hessian: `|det| > 1e-10 * scale^n`.
pub fn morse_bott_check(hessian: &DMatrix<f64>) -> Result<bool> {
    let n = hessian.nrows();
    if hessian.ncols() != n {
        return Err(Error::InvalidInput("Hessian must be square".into()));
    }
    let scale = hessian.amax();
    let asym = (hessian - hessian.transpose()).amax();
    if asym > 1e-9 * scale.max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    if scale == 0.0 {
        return Ok(false);
    }
    let eig = nalgebra::SymmetricEigen::new(hessian.clone());
    let det: f64 = eig.eigenvalues.iter().product();
    Ok(det.abs() > 1e-10 * scale.powi(n as i32))
}

/// Time-one linearised flow of a fibrewise Hamiltonian on `(p, q)`:
/// `I + [[0, 0], [D²H, 0]]`.
pub fn torus_monodromy(hessian: &DMatrix<f64>) -> DMatrix<f64> {
    let n = hessian.nrows();
    let mut m = DMatrix::identity(2 * n, 2 * n);
    m.view_mut((n, 0), (n, n)).copy_from(hessian);
    m
}

/// Dimension of the kernel, from singular values below `tol * max(1, σ_max)`.
pub fn kernel_dimension(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.singular_values();
    let cut = tol * sv.max().max(1.0);
    sv.iter().filter(|&&v| v <= cut).count() + m.ncols().saturating_sub(sv.len())
}


#[cfg(test)]
mod lemma_tests {
    use super::*;
    use crate::cone::ConeSpec;
    use crate::profile::DEFAULT_EPS_S;

    fn evaluator() -> ProfileEvaluator {
        let cone = ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap();
        let blocks = Blocks::new(ModelParams::default()).unwrap();
        ProfileEvaluator::new(cone, blocks, 3.0, DEFAULT_EPS_S).unwrap()
    }

    #[test]
    fn plus_point_on_the_arnold_cone() {
        let ev = evaluator();
        let alpha = HomologyClass::new(vec![1, 0]).unwrap();
        for s in [-5.0, -1.0, -0.5, 0.0, 1.0, 3.0] {
            let r = find_plus_point(&ev, s, &alpha, &NewtonOptions::default()).unwrap();
            assert!(r.all_ok(), "{r:?}");
            assert!(concavity_gap(&ev, &r).unwrap() < 0.0);
        }
    }

    #[test]
    fn outside_dual_cone_is_rejected() {
        let ev = evaluator();
        let alpha = HomologyClass::new(vec![0, 1]).unwrap();
        assert!(matches!(
            find_plus_point(&ev, 1.0, &alpha, &NewtonOptions::default()),
            Err(Error::Precondition(_))
        ));
    }
}
