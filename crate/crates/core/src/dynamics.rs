//! Hamiltonian vector fields on `T*T^n`, symplectic time stepping, mechanical
//! systems with trigonometric potentials and the sigma-composed cut-off
//! Hamiltonian.
//!
//! States are `z = [p; q]` with `q` lifted to the universal cover. The
//! equations of motion are `ṗ = -∂H/∂q`, `q̇ = ∂H/∂p`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::Blocks;
use crate::mollifier;

/// A smooth Hamiltonian on `T*T^n`, autonomous.
pub trait Hamiltonian: Sync {
    /// Number of degrees of freedom `n`.
    fn dim(&self) -> usize;
    fn value(&self, z: &DVector<f64>) -> f64;
    /// `[∂H/∂p; ∂H/∂q]`.
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let m = z.len();
        let mut h = DMatrix::zeros(m, m);
        for j in 0..m {
            let step = 1e-6 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += step;
            let mut zm = z.clone();
            zm[j] -= step;
            let col = (self.gradient(&zp) - self.gradient(&zm)) / (2.0 * step);
            h.set_column(j, &col);
        }
        0.5 * (&h + h.transpose())
    }
}

/// `(ṗ, q̇) = (-∂H/∂q, ∂H/∂p)` stacked as `[ṗ; q̇]`.
pub fn vector_field<H: Hamiltonian + ?Sized>(h: &H, z: &DVector<f64>) -> DVector<f64> {
    let n = h.dim();
    let g = h.gradient(z);
    let mut f = DVector::zeros(2 * n);
    for i in 0..n {
        f[i] = -g[n + i];
        f[n + i] = g[i];
    }
    f
}

/// Jacobian of the vector field, `J D²H` with `J = [[0, -I], [I, 0]]`.
pub fn field_jacobian<H: Hamiltonian + ?Sized>(h: &H, z: &DVector<f64>) -> DMatrix<f64> {
    let n = h.dim();
    let hess = h.hessian(z);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..2 * n {
            d[(i, j)] = -hess[(n + i, j)];
            d[(n + i, j)] = hess[(i, j)];
        }
    }
    d
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Implicit midpoint rule, order 2.
    Midpoint,
    /// Triple-jump composition of the midpoint rule, order 4.
    Midpoint4,
}

fn triple_jump() -> [f64; 3] {
    let cbrt2 = 2f64.powf(1.0 / 3.0);
    let g1 = 1.0 / (2.0 - cbrt2);
    [g1, -cbrt2 / (2.0 - cbrt2), g1]
}

fn midpoint_step<H: Hamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    dt: f64,
    t: f64,
    tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let m = z0.len();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut z1 = z0 + vector_field(h, z0) * dt;
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let mid = (z0 + &z1) * 0.5;
        let g = &z1 - z0 - vector_field(h, &mid) * dt;
        let jac = &eye - field_jacobian(h, &mid) * (0.5 * dt);
        let Some(delta) = jac.lu().solve(&g) else {
            return Err(Error::ImplicitSolve { t, step: dt });
        };
        z1 -= &delta;
        let size = delta.amax();
        if !size.is_finite() {
            return Err(Error::ImplicitSolve { t, step: dt });
        }
        if size <= 1e-15 * (1.0 + z1.amax()) || (size >= last && size < 1e-12) {
            last = size;
            break;
        }
        last = size;
    }
    if !(last < 1e-10) {
        return Err(Error::ImplicitSolve { t, step: dt });
    }
    let tan = if tangent {
        let mid = (z0 + &z1) * 0.5;
        let a = field_jacobian(h, &mid) * (0.5 * dt);
        let lhs = &eye - &a;
        let rhs = &eye + &a;
        Some(
            lhs.lu()
                .solve(&rhs)
                .ok_or(Error::ImplicitSolve { t, step: dt })?,
        )
    } else {
        None
    };
    Ok((z1, tan))
}

fn scheme_step<H: Hamiltonian + ?Sized>(
    h: &H,
    z: &DVector<f64>,
    dt: f64,
    t: f64,
    scheme: Scheme,
    tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    match scheme {
        Scheme::Midpoint => midpoint_step(h, z, dt, t, tangent),
        Scheme::Midpoint4 => {
            let mut state = z.clone();
            let mut tan: Option<DMatrix<f64>> = None;
            for g in triple_jump() {
                let (next, tn) = midpoint_step(h, &state, g * dt, t, tangent)?;
                state = next;
                if let Some(tn) = tn {
                    tan = Some(match tan {
                        Some(acc) => tn * acc,
                        None => tn,
                    });
                }
            }
            Ok((state, tan))
        }
    }
}

/// Number of fixed steps used for a duration `duration` at nominal step `step`.
pub fn step_count(duration: f64, step: f64) -> usize {
    ((duration.abs() / step).ceil() as usize).max(1)
}

/// Final state of the time-`duration` flow, with the tangent map on request.
#[derive(Debug, Clone)]
pub struct Flow {
    pub state: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
    pub steps: usize,
}

/// Flows `z0` for time `duration` (negative durations run backwards) with
/// `ceil(|duration|/step)` equal steps.
pub fn flow<H: Hamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    duration: f64,
    step: f64,
    scheme: Scheme,
    tangent: bool,
) -> Result<Flow> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {step}"
        )));
    }
    let steps = step_count(duration, step);
    flow_steps(h, z0, duration, steps, scheme, tangent)
}

/// As [`flow`] with an explicit number of steps.
pub fn flow_steps<H: Hamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    duration: f64,
    steps: usize,
    scheme: Scheme,
    tangent: bool,
) -> Result<Flow> {
    let dt = duration / steps as f64;
    let mut z = z0.clone();
    let m = z0.len();
    let mut tan = if tangent {
        Some(DMatrix::identity(m, m))
    } else {
        None
    };
    for k in 0..steps {
        let (next, tn) = scheme_step(h, &z, dt, k as f64 * dt, scheme, tangent)?;
        z = next;
        if let (Some(acc), Some(tn)) = (tan.as_mut(), tn) {
            *acc = tn * &*acc;
        }
    }
    Ok(Flow {
        state: z,
        tangent: tan,
        steps,
    })
}

/// Sampled trajectory with lifted angles.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn first(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }

    /// `|H(end) - H(start)|`.
    pub fn energy_drift(&self) -> f64 {
        (self.energies[self.energies.len() - 1] - self.energies[0]).abs()
    }

    pub fn max_energy_error(&self, reference: f64) -> f64 {
        self.energies
            .iter()
            .fold(0.0, |m, e| m.max((e - reference).abs()))
    }

    /// Writes `t, p_1..p_n, q_1..q_n, H` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.states[0].len() / 2;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.push("H".into());
        writeln!(out, "{}", header.join(","))?;
        for ((t, z), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(z.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{e:.16e}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integrates and records every step.
pub fn integrate<H: Hamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    duration: f64,
    step: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {step}"
        )));
    }
    integrate_steps(h, z0, duration, step_count(duration, step), scheme)
}

/// As [`integrate`] with an explicit number of steps.
pub fn integrate_steps<H: Hamiltonian + ?Sized>(
    h: &H,
    z0: &DVector<f64>,
    duration: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<Trajectory> {
    let dt = duration / steps as f64;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
    };
    let mut z = z0.clone();
    traj.times.push(0.0);
    traj.energies.push(h.value(&z));
    traj.states.push(z.clone());
    for k in 0..steps {
        z = scheme_step(h, &z, dt, k as f64 * dt, scheme, false)?.0;
        traj.times.push((k + 1) as f64 * dt);
        traj.energies.push(h.value(&z));
        traj.states.push(z.clone());
    }
    Ok(traj)
}

/// `∫ (H - <p, q̇>) dt` along a recorded trajectory (trapezoid rule).
pub fn action_integral<H: Hamiltonian + ?Sized>(h: &H, traj: &Trajectory) -> f64 {
    let n = h.dim();
    let integrand = |z: &DVector<f64>| {
        let g = h.gradient(z);
        let pq: f64 = (0..n).map(|i| z[i] * g[i]).sum();
        h.value(z) - pq
    };
    let mut total = 0.0;
    for k in 1..traj.states.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        total += 0.5 * dt * (integrand(&traj.states[k - 1]) + integrand(&traj.states[k]));
    }
    total
}

/// A Hamiltonian depending on `p` only, given by its jet.
pub struct Fiberwise<F>
where
    F: Fn(&DVector<f64>) -> Jet + Sync,
{
    pub n: usize,
    pub jet: F,
}

impl<F> Hamiltonian for Fiberwise<F>
where
    F: Fn(&DVector<f64>) -> Jet + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        (self.jet)(&z.rows(0, self.n).into_owned()).value
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let j = (self.jet)(&z.rows(0, self.n).into_owned());
        let mut g = DVector::zeros(2 * self.n);
        g.rows_mut(0, self.n).copy_from(&j.gradient);
        g
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let j = (self.jet)(&z.rows(0, self.n).into_owned());
        let mut h = DMatrix::zeros(2 * self.n, 2 * self.n);
        h.view_mut((0, 0), (self.n, self.n)).copy_from(&j.hessian);
        h
    }
}

/// One term `cos_coef cos(2π k·q) + sin_coef sin(2π k·q)` of a trigonometric
/// potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `H(p, q) = Σ σ_i p_i²/2 + V(q)` with `V = a·raw(q) - max(a·raw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalSystem {
    signature: Vec<f64>,
    terms: Vec<TrigTerm>,
    amplitude: f64,
    raw_max: f64,
    raw_min: f64,
}

impl MechanicalSystem {
    pub fn new(signature: Vec<f64>, terms: Vec<TrigTerm>, amplitude: f64) -> Result<Self> {
        let n = signature.len();
        if n == 0 || signature.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidInput(format!(
                "signature entries must be +1 or -1, got {signature:?}"
            )));
        }
        if terms.iter().any(|t| t.k.len() != n) {
            return Err(Error::InvalidInput(
                "frequency vectors must match the dimension".into(),
            ));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidInput("amplitude must be finite".into()));
        }
        let mut sys = Self {
            signature,
            terms,
            amplitude,
            raw_max: 0.0,
            raw_min: 0.0,
        };
        let (lo, hi) = sys.raw_extremes();
        sys.raw_min = lo;
        sys.raw_max = hi;
        Ok(sys)
    }

    /// `p_1²/2 - p_2²/2 + a (cos 2πq_1 + cos 2πq_2 - 2)`.
    pub fn arnold(amplitude: f64) -> Self {
        Self::new(
            vec![1.0, -1.0],
            vec![
                TrigTerm {
                    k: vec![1, 0],
                    cos: 1.0,
                    sin: 0.0,
                },
                TrigTerm {
                    k: vec![0, 1],
                    cos: 1.0,
                    sin: 0.0,
                },
            ],
            amplitude,
        )
        .expect("the Arnold system is well formed")
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self {
            amplitude,
            ..self.clone()
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn signature(&self) -> &[f64] {
        &self.signature
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    fn n(&self) -> usize {
        self.signature.len()
    }

    /// `max_q a·raw(q)`; subtracting it puts the maximum of `V` at 0.
    pub fn offset(&self) -> f64 {
        if self.amplitude >= 0.0 {
            self.amplitude * self.raw_max
        } else {
            self.amplitude * self.raw_min
        }
    }

    /// `M = -min_q V ≥ 0`.
    pub fn depth(&self) -> f64 {
        self.amplitude.abs() * (self.raw_max - self.raw_min)
    }

    fn raw(&self, q: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut v = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            let phase: f64 = 2.0 * PI * t.k.iter().zip(q).map(|(&k, &x)| k as f64 * x).sum::<f64>();
            let (s, c) = phase.sin_cos();
            v += t.cos * c + t.sin * s;
            let d1 = 2.0 * PI * (-t.cos * s + t.sin * c);
            let d2 = -4.0 * PI * PI * (t.cos * c + t.sin * s);
            for i in 0..n {
                let ki = t.k[i] as f64;
                g[i] += d1 * ki;
                for j in 0..n {
                    h[(i, j)] += d2 * ki * t.k[j] as f64;
                }
            }
        }
        (v, g, h)
    }

    fn raw_extremes(&self) -> (f64, f64) {
        let n = self.n();
        if self.terms.is_empty() {
            return (0.0, 0.0);
        }
        let per_axis: usize = match n {
            1 => 512,
            2 => 96,
            3 => 32,
            _ => 12,
        };
        let total = per_axis.pow(n as u32);
        let mut best_hi = (f64::NEG_INFINITY, vec![0.0; n]);
        let mut best_lo = (f64::INFINITY, vec![0.0; n]);
        let mut q = vec![0.0; n];
        for idx in 0..total {
            let mut r = idx;
            for qi in q.iter_mut() {
                *qi = (r % per_axis) as f64 / per_axis as f64;
                r /= per_axis;
            }
            let v = self.raw(&q).0;
            if v > best_hi.0 {
                best_hi = (v, q.clone());
            }
            if v < best_lo.0 {
                best_lo = (v, q.clone());
            }
        }
        let refine = |start: Vec<f64>, sign: f64| -> f64 {
            let mut q = DVector::from_vec(start);
            let mut best = self.raw(q.as_slice()).0;
            for _ in 0..50 {
                let (_, g, h) = self.raw(q.as_slice());
                let Some(step) = h.lu().solve(&(-&g)) else {
                    break;
                };
                if step.amax() > 0.5 / per_axis as f64 {
                    break;
                }
                let trial = &q + step;
                let v = self.raw(trial.as_slice()).0;
                if sign * v < sign * best - 1e-300 && sign * v < sign * best {
                    break;
                }
                best = if sign > 0.0 { best.max(v) } else { best.min(v) };
                q = trial;
                if g.amax() < 1e-14 {
                    break;
                }
            }
            best
        };
        (
            refine(best_lo.1, -1.0).min(best_lo.0),
            refine(best_hi.1, 1.0).max(best_hi.0),
        )
    }

    /// Normalised potential with gradient and Hessian.
    pub fn potential(&self, q: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (v, g, h) = self.raw(q);
        (
            self.amplitude * v - self.offset(),
            g * self.amplitude,
            h * self.amplitude,
        )
    }

    pub fn kinetic(&self, p: &[f64]) -> f64 {
        self.signature
            .iter()
            .zip(p)
            .map(|(s, x)| 0.5 * s * x * x)
            .sum()
    }
}

impl Hamiltonian for MechanicalSystem {
    fn dim(&self) -> usize {
        self.n()
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        let n = self.n();
        self.kinetic(&z.as_slice()[..n]) + self.potential(&z.as_slice()[n..]).0
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let (_, gv, _) = self.potential(&z.as_slice()[n..]);
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            g[i] = self.signature[i] * z[i];
            g[n + i] = gv[i];
        }
        g
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let (_, _, hv) = self.potential(&z.as_slice()[n..]);
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            h[(i, i)] = self.signature[i];
        }
        h.view_mut((n, n), (n, n)).copy_from(&hv);
        h
    }
}

/// Leapfrog (Störmer-Verlet) for the separable mechanical system, optionally
/// composed to order 4.
pub fn leapfrog(
    sys: &MechanicalSystem,
    z0: &DVector<f64>,
    duration: f64,
    step: f64,
    order4: bool,
) -> DVector<f64> {
    let n = sys.dim();
    let steps = step_count(duration, step);
    let dt = duration / steps as f64;
    let mut p: Vec<f64> = z0.as_slice()[..n].to_vec();
    let mut q: Vec<f64> = z0.as_slice()[n..].to_vec();
    let weights: Vec<f64> = if order4 {
        triple_jump().to_vec()
    } else {
        vec![1.0]
    };
    for _ in 0..steps {
        for &w in &weights {
            let h = w * dt;
            let g = sys.potential(&q).1;
            for i in 0..n {
                p[i] -= 0.5 * h * g[i];
            }
            for i in 0..n {
                q[i] += h * sys.signature[i] * p[i];
            }
            let g = sys.potential(&q).1;
            for i in 0..n {
                p[i] -= 0.5 * h * g[i];
            }
        }
    }
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from_slice(&p);
    z.rows_mut(n, n).copy_from_slice(&q);
    z
}

/// Energy window `(e_lo, e_hi)` and height `c` of the sigma composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaProfile {
    pub e_lo: f64,
    pub e_hi: f64,
    pub c: f64,
}

impl SigmaProfile {
    pub fn new(e_lo: f64, e_hi: f64, c: f64) -> Result<Self> {
        if !(e_hi > e_lo) {
            return Err(Error::Precondition(format!(
                "energy window must be nondegenerate, got ({e_lo}, {e_hi})"
            )));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "height c must be positive, got {c}"
            )));
        }
        Ok(Self { e_lo, e_hi, c })
    }

    pub fn width(&self) -> f64 {
        self.e_hi - self.e_lo
    }

    /// The smooth step `σ`: 0 on `r <= 0`, 1 on `r >= 1`, `σ' > 0` between.
    pub fn sigma(r: f64) -> f64 {
        mollifier::smooth_step(r)
    }

    pub fn sigma_d1(r: f64) -> f64 {
        mollifier::smooth_step_d1(r)
    }

    pub fn sigma_d2(r: f64) -> f64 {
        mollifier::smooth_step_d2(r)
    }

    /// `r = (E - e_lo)/(e_hi - e_lo)`.
    pub fn reduced(&self, energy: f64) -> f64 {
        (energy - self.e_lo) / self.width()
    }
}

/// `F(p, q) = c σ((H - e_lo)/(e_hi - e_lo)) W_1(𝐀^-1 p)` on the cone, zero
/// outside.
#[derive(Debug, Clone)]
pub struct ComposedHamiltonian {
    pub system: MechanicalSystem,
    pub sigma: SigmaProfile,
    pub cone: ConeSpec,
    pub blocks: Blocks,
}

impl ComposedHamiltonian {
    pub fn new(
        system: MechanicalSystem,
        sigma: SigmaProfile,
        cone: ConeSpec,
        blocks: Blocks,
    ) -> Result<Self> {
        if cone.dim() != system.dim() {
            return Err(Error::InvalidInput(
                "cone and system dimensions differ".into(),
            ));
        }
        check_window(&system, &sigma, cone.p_star())?;
        Ok(Self {
            system,
            sigma,
            cone,
            blocks,
        })
    }

    fn cutoff(&self, p: &DVector<f64>) -> Jet {
        let y = self.cone.to_y(p);
        self.blocks
            .big_w(1.0, &y, self.cone.radius())
            .linear_pullback(self.cone.a_norm_inv())
    }

    /// `W_1(𝐀^-1 p)` at the momentum part of `z`.
    pub fn cutoff_value(&self, z: &DVector<f64>) -> f64 {
        let n = self.dim();
        self.cutoff(&z.rows(0, n).into_owned()).value
    }

    fn parts(&self, z: &DVector<f64>) -> Option<(f64, f64, f64, Jet)> {
        let n = self.dim();
        let p = z.rows(0, n).into_owned();
        if !self.cone.contains(&p) {
            return None;
        }
        let r = self.sigma.reduced(self.system.value(z));
        Some((
            SigmaProfile::sigma(r),
            SigmaProfile::sigma_d1(r) / self.sigma.width(),
            SigmaProfile::sigma_d2(r) / (self.sigma.width() * self.sigma.width()),
            self.cutoff(&p),
        ))
    }
}

/// `K(p*) - M > e_hi > e_lo > max V = 0`.
pub fn check_window(
    system: &MechanicalSystem,
    sigma: &SigmaProfile,
    p_star: &DVector<f64>,
) -> Result<()> {
    let k = system.kinetic(p_star.as_slice());
    let m = system.depth();
    if !(sigma.e_lo > 0.0) {
        return Err(Error::WindowInfeasible(format!(
            "e_lo = {} must exceed max V = 0",
            sigma.e_lo
        )));
    }
    if !(sigma.e_hi > sigma.e_lo) {
        return Err(Error::WindowInfeasible(format!(
            "window ({}, {}) is empty",
            sigma.e_lo, sigma.e_hi
        )));
    }
    if !(k - m > sigma.e_hi) {
        return Err(Error::WindowInfeasible(format!(
            "K(p*) - M = {} does not exceed e_hi = {}",
            k - m,
            sigma.e_hi
        )));
    }
    Ok(())
}

impl Hamiltonian for ComposedHamiltonian {
    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        match self.parts(z) {
            Some((s, _, _, w)) => self.sigma.c * s * w.value,
            None => 0.0,
        }
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let Some((s, s1, _, w)) = self.parts(z) else {
            return DVector::zeros(2 * n);
        };
        let gh = self.system.gradient(z);
        let mut g = gh * (s1 * w.value);
        for i in 0..n {
            g[i] += s * w.gradient[i];
        }
        g * self.sigma.c
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let Some((s, s1, s2, w)) = self.parts(z) else {
            return DMatrix::zeros(2 * n, 2 * n);
        };
        let gh = self.system.gradient(z);
        let hh = self.system.hessian(z);
        let mut gw = DVector::zeros(2 * n);
        gw.rows_mut(0, n).copy_from(&w.gradient);
        let mut hw = DMatrix::zeros(2 * n, 2 * n);
        hw.view_mut((0, 0), (n, n)).copy_from(&w.hessian);
        let out = &gh * gh.transpose() * (s2 * w.value)
            + hh * (s1 * w.value)
            + (&gh * gw.transpose() + &gw * gh.transpose()) * s1
            + hw * s;
        out * self.sigma.c
    }
}
