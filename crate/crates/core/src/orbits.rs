//! Closed orbits in a prescribed homology class: integrable seeds, multiple
//! shooting with free period and an energy constraint, continuation in the
//! potential amplitude, certification and the cut-off diagnostics of the
//! sigma-composed Hamiltonian.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::HomologyClass;
use crate::dynamics::{
    flow_steps, integrate_steps, step_count, vector_field, ComposedHamiltonian, Hamiltonian,
    MechanicalSystem, Scheme, SigmaProfile, Trajectory,
};
use crate::error::{Error, Result};

/// Where an orbit came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitSource {
    IntegrableSeed,
    Continuation,
    Direct,
}

/// Independent checks on a found orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub passed: bool,
    pub shooting_residual: f64,
    pub max_energy_error: f64,
    pub winding: Vec<i64>,
    pub winding_ok: bool,
    pub monodromy_det: f64,
    pub half_step_residual: f64,
    pub half_step_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub alpha: HomologyClass,
    pub energy: f64,
    pub period: f64,
    /// `[p; q]`.
    pub initial_state: Vec<f64>,
    pub shooting_residual: f64,
    /// Row-major rows of the time-`period` linearised flow.
    pub monodromy: Vec<Vec<f64>>,
    pub continuation_parameter: f64,
    pub source: OrbitSource,
    /// Number of integrator steps over one period (0 for closed forms).
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
}

impl OrbitRecord {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_vec(self.initial_state.clone())
    }

    pub fn monodromy_matrix(&self) -> DMatrix<f64> {
        let m = self.monodromy.len();
        DMatrix::from_fn(m, m, |i, j| self.monodromy[i][j])
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len() / 2
    }

    pub fn is_certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.passed)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub step: f64,
    pub scheme: Scheme,
    pub max_newton: usize,
    /// Newton stops once the residual is below this.
    pub newton_tol: f64,
    /// A refinement is accepted if it ends below this.
    pub accept_tol: f64,
    pub continuation_cap: f64,
    /// Amplitudes above this use `segments` shooting segments.
    pub multishoot_threshold: f64,
    pub segments: usize,
    pub energy_samples: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            scheme: Scheme::Midpoint4,
            max_newton: 30,
            newton_tol: 1e-11,
            accept_tol: 1e-9,
            continuation_cap: 0.05,
            multishoot_threshold: 0.2,
            segments: 8,
            energy_samples: 100,
        }
    }
}

/// The orbit `q(t) = q0 + t α/T` of the free system at the given energy.
pub fn integrable_orbit(
    alpha: &HomologyClass,
    energy: f64,
    signature: &[f64],
) -> Result<OrbitRecord> {
    let n = signature.len();
    if alpha.dim() != n {
        return Err(Error::InvalidInput(
            "class and signature dimensions differ".into(),
        ));
    }
    let a = alpha.as_real();
    let kin: f64 = (0..n).map(|i| signature[i] * a[i] * a[i]).sum();
    if energy == 0.0 || !(kin * energy > 0.0) {
        return Err(Error::InfeasibleClass(format!(
            "class {alpha} has kinetic weight {kin} which cannot reach energy {energy}"
        )));
    }
    let period = (kin / (2.0 * energy)).sqrt();
    let mut z = vec![0.0; 2 * n];
    for i in 0..n {
        z[i] = signature[i] * a[i] / period;
    }
    let mut mono = DMatrix::identity(2 * n, 2 * n);
    for i in 0..n {
        mono[(n + i, i)] = period * signature[i];
    }
    Ok(OrbitRecord {
        alpha: alpha.clone(),
        energy,
        period,
        initial_state: z,
        shooting_residual: 0.0,
        monodromy: rows(&mono),
        continuation_parameter: 0.0,
        source: OrbitSource::IntegrableSeed,
        steps: 0,
        window: None,
        certificate: None,
    })
}

fn closure_residual(
    start: &DVector<f64>,
    end: &DVector<f64>,
    alpha: &HomologyClass,
) -> DVector<f64> {
    let n = alpha.dim();
    let mut r = end - start;
    for i in 0..n {
        r[n + i] -= alpha.components()[i] as f64;
    }
    r
}

/// `(p(T) - p(0), q(T) - q(0) - α)` with `ceil(T/step)` steps.
pub fn shoot<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    z0: &DVector<f64>,
    period: f64,
    step: f64,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    if !(period > 0.0) {
        return Err(Error::Precondition(format!(
            "period must be positive, got {period}"
        )));
    }
    shoot_steps(h, alpha, z0, period, step_count(period, step), scheme)
}

pub fn shoot_steps<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    z0: &DVector<f64>,
    period: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    let end = flow_steps(h, z0, period, steps, scheme, false)?.state;
    Ok(closure_residual(z0, &end, alpha))
}

/// Integer winding of a recorded trajectory.
pub fn homology_class(traj: &Trajectory) -> Result<Vec<i64>> {
    let start = traj.first();
    let end = traj.last();
    let n = start.len() / 2;
    let dp = (end.rows(0, n) - start.rows(0, n)).amax();
    if dp > 1e-6 {
        return Err(Error::NonClosure(format!("momentum defect {dp:.3e}")));
    }
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let d = end[n + i] - start[n + i];
        let r = d.round();
        if (d - r).abs() > 1e-6 {
            return Err(Error::NonClosure(format!(
                "angle {i} displacement {d} is not an integer"
            )));
        }
        w.push(r as i64);
    }
    Ok(w)
}

/// The first coordinate that winds, whose initial angle is frozen.
fn pinned_index(alpha: &HomologyClass) -> usize {
    let n = alpha.dim();
    n + alpha
        .components()
        .iter()
        .position(|&a| a != 0)
        .expect("class is nonzero")
}

struct Refined {
    z0: DVector<f64>,
    period: f64,
    steps: usize,
}

struct Layout {
    n2: usize,
    m: usize,
    pinned: usize,
    pin_value: f64,
}

impl Layout {
    fn unknowns(&self) -> usize {
        self.n2 * self.m
    }

    fn pack(&self, z: &[DVector<f64>], period: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.unknowns());
        let mut k = 0;
        for i in 0..self.n2 {
            if i != self.pinned {
                x[k] = z[0][i];
                k += 1;
            }
        }
        for seg in &z[1..] {
            x.rows_mut(k, self.n2).copy_from(seg);
            k += self.n2;
        }
        x[k] = period;
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<DVector<f64>>, f64) {
        let mut z0 = DVector::zeros(self.n2);
        let mut k = 0;
        for i in 0..self.n2 {
            if i == self.pinned {
                z0[i] = self.pin_value;
            } else {
                z0[i] = x[k];
                k += 1;
            }
        }
        let mut z = vec![z0];
        for _ in 1..self.m {
            z.push(x.rows(k, self.n2).into_owned());
            k += self.n2;
        }
        (z, x[k])
    }
}

fn multishoot_residual<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    energy: f64,
    layout: &Layout,
    z: &[DVector<f64>],
    period: f64,
    seg_steps: usize,
    scheme: Scheme,
    tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let n2 = layout.n2;
    let n = n2 / 2;
    let m = layout.m;
    let mut shift = DVector::zeros(n2);
    for i in 0..n {
        shift[n + i] = alpha.components()[i] as f64;
    }
    let rows = n2 * m + 1;
    let mut r = DVector::zeros(rows);
    let mut jac = tangent.then(|| DMatrix::zeros(rows, layout.unknowns()));
    let col_of = |seg: usize, i: usize| -> Option<usize> {
        if seg == 0 || seg == m {
            if i == layout.pinned {
                None
            } else if i < layout.pinned {
                Some(i)
            } else {
                Some(i - 1)
            }
        } else {
            Some(n2 - 1 + (seg - 1) * n2 + i)
        }
    };
    let t_col = layout.unknowns() - 1;
    for k in 0..m {
        let fl = flow_steps(h, &z[k], period / m as f64, seg_steps, scheme, tangent)?;
        let target = if k + 1 == m {
            &z[0] + &shift
        } else {
            z[k + 1].clone()
        };
        r.rows_mut(k * n2, n2).copy_from(&(&fl.state - &target));
        if let Some(j) = jac.as_mut() {
            let tan = fl.tangent.as_ref().expect("tangent requested");
            for a in 0..n2 {
                for b in 0..n2 {
                    if let Some(c) = col_of(k, b) {
                        j[(k * n2 + a, c)] += tan[(a, b)];
                    }
                }
                if let Some(c) = col_of(k + 1, a) {
                    j[(k * n2 + a, c)] -= 1.0;
                }
            }
            let f = vector_field(h, &fl.state) / m as f64;
            for a in 0..n2 {
                j[(k * n2 + a, t_col)] = f[a];
            }
        }
    }
    r[rows - 1] = h.value(&z[0]) - energy;
    if let Some(j) = jac.as_mut() {
        let g = h.gradient(&z[0]);
        for b in 0..n2 {
            if let Some(c) = col_of(0, b) {
                j[(rows - 1, c)] = g[b];
            }
        }
    }
    Ok((r, jac))
}

fn pseudo_solve(j: DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = j.svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.max();
    svd.solve(r, cutoff).ok()
}

/// Gauss-Newton on the multiple-shooting system with `segments` segments.
fn refine<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    energy: f64,
    z0: &DVector<f64>,
    period: f64,
    segments: usize,
    opts: &OrbitOptions,
) -> Result<Refined> {
    let n2 = z0.len();
    let m = segments.max(1);
    let pinned = pinned_index(alpha);
    let layout = Layout {
        n2,
        m,
        pinned,
        pin_value: z0[pinned],
    };
    let seg_steps = step_count(period / m as f64, opts.step);
    let mut z = vec![z0.clone()];
    for _ in 1..m {
        let last = z.last().expect("nonempty");
        z.push(flow_steps(h, last, period / m as f64, seg_steps, opts.scheme, false)?.state);
    }
    let mut x = layout.pack(&z, period);
    let eval = |x: &DVector<f64>, tangent: bool| -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let (z, t) = layout.unpack(x);
        if !(t > 0.0) {
            return Err(Error::NoConvergence(format!("period became {t}")));
        }
        multishoot_residual(
            h,
            alpha,
            energy,
            &layout,
            &z,
            t,
            seg_steps,
            opts.scheme,
            tangent,
        )
    };
    let (mut r, mut jac) = eval(&x, true)?;
    let mut norm = r.norm();
    for _ in 0..opts.max_newton {
        if norm < opts.newton_tol {
            break;
        }
        let Some(dx) = pseudo_solve(jac.take().expect("jacobian"), &r) else {
            break;
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..10 {
            let trial = &x - &dx * lambda;
            if let Ok((rt, _)) = eval(&trial, false) {
                if rt.norm() < norm {
                    accepted = Some(trial);
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some(next) = accepted else { break };
        x = next;
        let (rn, jn) = eval(&x, true)?;
        r = rn;
        jac = jn;
        norm = r.norm();
    }
    if !(norm < opts.accept_tol) {
        return Err(Error::NoConvergence(format!(
            "shooting residual {norm:.3e} for class {alpha} at energy {energy}"
        )));
    }
    let (z, t) = layout.unpack(&x);
    Ok(Refined {
        z0: z[0].clone(),
        period: t,
        steps: seg_steps * m,
    })
}

fn record_from<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    energy: f64,
    refined: &Refined,
    amplitude: f64,
    source: OrbitSource,
    scheme: Scheme,
) -> Result<OrbitRecord> {
    let fl = flow_steps(h, &refined.z0, refined.period, refined.steps, scheme, true)?;
    let res = closure_residual(&refined.z0, &fl.state, alpha).norm();
    Ok(OrbitRecord {
        alpha: alpha.clone(),
        energy,
        period: refined.period,
        initial_state: refined.z0.iter().copied().collect(),
        shooting_residual: res.max(0.0),
        monodromy: rows(&fl.tangent.expect("tangent requested")),
        continuation_parameter: amplitude,
        source,
        steps: refined.steps,
        window: None,
        certificate: None,
    })
}

/// Refines an approximate orbit of an arbitrary Hamiltonian (single segment).
pub fn refine_orbit<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    energy: f64,
    z0: &DVector<f64>,
    period: f64,
    segments: usize,
    opts: &OrbitOptions,
) -> Result<OrbitRecord> {
    let r = refine(h, alpha, energy, z0, period, segments, opts)?;
    record_from(
        h,
        alpha,
        energy,
        &r,
        f64::NAN,
        OrbitSource::Direct,
        opts.scheme,
    )
}

/// Continues the integrable seed from amplitude 0 to `amplitude`.
pub fn find_orbit(
    system: &MechanicalSystem,
    alpha: &HomologyClass,
    energy: f64,
    amplitude: f64,
    opts: &OrbitOptions,
) -> Result<OrbitRecord> {
    let seed = integrable_orbit(alpha, energy, system.signature())?;
    if amplitude == 0.0 {
        return Ok(seed);
    }
    let mut z = seed.state();
    let mut period = seed.period;
    let mut reached = 0.0;
    let mut step = opts.continuation_cap.min(amplitude.abs());
    let dir = amplitude.signum();
    let mut streak = 0;
    let mut last: Option<Refined> = None;
    while reached < amplitude.abs() {
        let trial = (reached + step).min(amplitude.abs());
        let sys = system.with_amplitude(dir * trial);
        let segments = if trial > opts.multishoot_threshold {
            opts.segments
        } else {
            1
        };
        let outcome = refine(&sys, alpha, energy, &z, period, segments, opts).and_then(|r| {
            let w = winding_of(&sys, alpha, &r, opts.scheme)?;
            if w != alpha.components() {
                return Err(Error::NonClosure(format!("class changed to {w:?}")));
            }
            Ok(r)
        });
        match outcome {
            Ok(r) => {
                z = r.z0.clone();
                period = r.period;
                reached = trial;
                last = Some(r);
                streak += 1;
                if streak >= 3 {
                    step = (2.0 * step).min(opts.continuation_cap);
                    streak = 0;
                }
            }
            Err(_) => {
                step *= 0.5;
                streak = 0;
                if step < 1e-4 * amplitude.abs() {
                    return Err(Error::ContinuationStall {
                        reached: dir * reached,
                        target: amplitude,
                        step,
                    });
                }
            }
        }
    }
    let sys = system.with_amplitude(amplitude);
    let r = last.expect("at least one continuation step");
    record_from(
        &sys,
        alpha,
        energy,
        &r,
        amplitude,
        OrbitSource::Continuation,
        opts.scheme,
    )
}

fn winding_of<H: Hamiltonian + ?Sized>(
    h: &H,
    alpha: &HomologyClass,
    r: &Refined,
    scheme: Scheme,
) -> Result<Vec<i64>> {
    let res = shoot_steps(h, alpha, &r.z0, r.period, r.steps, scheme)?;
    let n = alpha.dim();
    let start = &r.z0;
    let mut end = start.clone() + &res;
    for i in 0..n {
        end[n + i] += alpha.components()[i] as f64;
    }
    let traj = Trajectory {
        times: vec![0.0, r.period],
        energies: vec![h.value(start), h.value(&end)],
        states: vec![start.clone(), end],
    };
    homology_class(&traj)
}

/// Re-validates a record: closure, energy along the orbit, winding, monodromy
/// determinant and a half-step re-integration.
pub fn certify<H: Hamiltonian + ?Sized>(
    h: &H,
    record: &OrbitRecord,
    opts: &OrbitOptions,
) -> Result<Certificate> {
    let z0 = record.state();
    let steps = if record.steps > 0 {
        record.steps
    } else {
        step_count(record.period, opts.step)
    };
    let traj = integrate_steps(h, &z0, record.period, steps, opts.scheme)?;
    let residual = closure_residual(&z0, traj.last(), &record.alpha).norm();
    let samples = opts.energy_samples.max(2);
    let mut max_energy_error: f64 = 0.0;
    for k in 0..samples {
        let idx = (k * steps) / (samples - 1);
        max_energy_error =
            max_energy_error.max((traj.energies[idx.min(steps)] - record.energy).abs());
    }
    let winding = homology_class(&traj).unwrap_or_default();
    let winding_ok = winding == record.alpha.components();
    let det = record.monodromy_matrix().determinant();
    let half = shoot_steps(h, &record.alpha, &z0, record.period, 2 * steps, opts.scheme)?.norm();
    let half_step_ok = half < 10.0 * residual.max(1e-10);
    let passed = residual < 1e-8
        && max_energy_error < 1e-8
        && winding_ok
        && (det - 1.0).abs() < 1e-7
        && half_step_ok;
    Ok(Certificate {
        passed,
        shooting_residual: residual,
        max_energy_error,
        winding,
        winding_ok,
        monodromy_det: det,
        half_step_residual: half,
        half_step_ok,
    })
}

/// Refines a perturbed free-system seed numerically and returns the largest
/// deviation of the period and momenta from the closed form.
pub fn integrable_oracle_deviation(
    alpha: &HomologyClass,
    energy: f64,
    signature: &[f64],
    opts: &OrbitOptions,
) -> Result<f64> {
    let exact = integrable_orbit(alpha, energy, signature)?;
    let free = MechanicalSystem::new(signature.to_vec(), Vec::new(), 0.0)?;
    let n = signature.len();
    let mut z = exact.state();
    for i in 0..n {
        z[i] += if i % 2 == 0 { 1e-4 } else { -1e-4 };
    }
    let rec = refine_orbit(
        &free,
        alpha,
        energy,
        &z,
        exact.period * (1.0 + 1e-4),
        1,
        opts,
    )?;
    let mut dev = (rec.period - exact.period).abs();
    for i in 0..n {
        dev = dev.max((rec.initial_state[i] - exact.initial_state[i]).abs());
    }
    Ok(dev)
}

/// A window whose search failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub alpha: HomologyClass,
    pub window: [f64; 2],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanResult {
    pub records: Vec<OrbitRecord>,
    pub unresolved: Vec<Unresolved>,
}

/// One certified orbit per window, tried at the window midpoint and then at
/// the quarter points.
pub fn dense_scan(
    system: &MechanicalSystem,
    alpha: &HomologyClass,
    windows: &[(f64, f64)],
    opts: &OrbitOptions,
) -> Result<ScanResult> {
    for &(lo, hi) in windows {
        if !(hi > lo) {
            return Err(Error::Precondition(format!(
                "window ({lo}, {hi}) is degenerate"
            )));
        }
    }
    let outcomes: Vec<std::result::Result<OrbitRecord, Unresolved>> = windows
        .par_iter()
        .map(|&(lo, hi)| scan_window(system, alpha, lo, hi, opts))
        .collect();
    let mut out = ScanResult::default();
    for o in outcomes {
        match o {
            Ok(r) => out.records.push(r),
            Err(u) => out.unresolved.push(u),
        }
    }
    Ok(out)
}

fn scan_window(
    system: &MechanicalSystem,
    alpha: &HomologyClass,
    lo: f64,
    hi: f64,
    opts: &OrbitOptions,
) -> std::result::Result<OrbitRecord, Unresolved> {
    let mut reason = String::new();
    for frac in [0.5, 0.25, 0.75] {
        let energy = lo + frac * (hi - lo);
        let attempt =
            find_orbit(system, alpha, energy, system.amplitude(), opts).and_then(|mut rec| {
                let cert = certify(system, &rec, opts)?;
                rec.certificate = Some(cert);
                rec.window = Some([lo, hi]);
                Ok(rec)
            });
        match attempt {
            Ok(rec) if rec.is_certified() && rec.energy > lo && rec.energy < hi => return Ok(rec),
            Ok(rec) => {
                reason = format!(
                    "orbit at energy {energy} failed certification: {:?}",
                    rec.certificate
                )
            }
            Err(e) => reason = e.to_string(),
        }
    }
    Err(Unresolved {
        alpha: alpha.clone(),
        window: [lo, hi],
        reason,
    })
}

/// Exploratory random multistart on energy shells in `(e_lo, e_hi)`, for
/// classes without an integrable seed. Returns the distinct certified orbits
/// found.
pub fn direct_search(
    system: &MechanicalSystem,
    alpha: &HomologyClass,
    window: (f64, f64),
    starts: usize,
    seed: u64,
    opts: &OrbitOptions,
) -> Result<Vec<OrbitRecord>> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::Precondition(format!(
            "window ({lo}, {hi}) is degenerate"
        )));
    }
    let n = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guesses: Vec<(DVector<f64>, f64, f64)> = (0..starts)
        .map(|_| {
            let energy = rng.gen_range(lo..hi);
            let period = rng.gen_range(0.5..5.0);
            let mut z = DVector::zeros(2 * n);
            for i in 0..n {
                z[i] = system.signature()[i] * alpha.components()[i] as f64 / period
                    + rng.gen_range(-0.1..0.1);
                z[n + i] = rng.gen_range(0.0..1.0);
            }
            (z, period, energy)
        })
        .collect();
    let found: Vec<OrbitRecord> = guesses
        .par_iter()
        .filter_map(|(z, period, energy)| {
            let mut rec = refine_orbit(system, alpha, *energy, z, *period, 1, opts).ok()?;
            rec.continuation_parameter = system.amplitude();
            rec.window = Some([lo, hi]);
            rec.certificate = Some(certify(system, &rec, opts).ok()?);
            rec.is_certified().then_some(rec)
        })
        .collect();
    let mut distinct: Vec<OrbitRecord> = Vec::new();
    for rec in found {
        let dup = distinct
            .iter()
            .any(|d| (d.energy - rec.energy).abs() < 1e-8 && (d.period - rec.period).abs() < 1e-8);
        if !dup {
            distinct.push(rec);
        }
    }
    Ok(distinct)
}

/// Outcome of re-integrating an orbit under the composed Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMapReport {
    pub predicted_period: f64,
    pub closure_residual: f64,
    pub min_cutoff: f64,
    pub passed: bool,
}

/// `T_F = T_H (e_hi - e_lo) / (c σ'((s - e_lo)/(e_hi - e_lo)))`.
pub fn predicted_period(sigma: &SigmaProfile, period: f64, energy: f64) -> f64 {
    period * sigma.width() / (sigma.c * SigmaProfile::sigma_d1(sigma.reduced(energy)))
}

/// Flows `X_F` for the predicted period from the orbit's start and checks it
/// closes in the class of the record.
pub fn period_map_check(
    f: &ComposedHamiltonian,
    record: &OrbitRecord,
    opts: &OrbitOptions,
) -> Result<PeriodMapReport> {
    let t_f = predicted_period(&f.sigma, record.period, record.energy);
    if !t_f.is_finite() {
        return Err(Error::Precondition(format!(
            "σ' vanishes at energy {} inside the window",
            record.energy
        )));
    }
    let z0 = record.state();
    let steps = if record.steps > 0 {
        record.steps
    } else {
        step_count(record.period, opts.step)
    };
    let traj = integrate_steps(f, &z0, t_f, steps, opts.scheme)?;
    let min_cutoff = traj
        .states
        .iter()
        .map(|z| f.cutoff_value(z))
        .fold(f64::INFINITY, f64::min);
    if min_cutoff < 1.0 - 1e-9 {
        return Err(Error::RegionViolation(format!(
            "W_1 drops to {min_cutoff} along the orbit"
        )));
    }
    let closure = closure_residual(&z0, traj.last(), &record.alpha).norm();
    Ok(PeriodMapReport {
        predicted_period: t_f,
        closure_residual: closure,
        min_cutoff,
        passed: closure < 1e-6,
    })
}

/// Result of sampling the cut-off annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakReport {
    pub passed: bool,
    pub precondition_met: bool,
    pub samples: usize,
    pub low_energy_samples: usize,
    pub high_energy_samples: usize,
    /// Minimum over low-energy samples of the distance of `(q̇1+q̇2, q̇1-q̇2)`
    /// from its value on an orbit of class α.
    pub min_speed_mismatch: f64,
    /// Maximum of `‖q̇‖` over high-energy samples.
    pub max_high_energy_speed: f64,
    /// Maximum of `‖ṗ‖` over high-energy samples.
    pub max_high_energy_force: f64,
    pub witness: Option<Vec<f64>>,
}

/// Angular intervals of the annulus ray `θ ↦ ρ(cos θ, sin θ)` on which the
/// kinetic energy stays below `bound`.
fn low_energy_arcs(f: &ComposedHamiltonian, rho: f64, bound: f64) -> Vec<(f64, f64)> {
    const GRID: usize = 2048;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let kin = |theta: f64| {
        let y = DVector::from_vec(vec![rho * theta.cos(), rho * theta.sin()]);
        let p = f.cone.from_y(&y);
        f.system.kinetic(p.as_slice()) - bound
    };
    let root = |mut a: f64, mut b: f64| {
        let fa = kin(a);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if (kin(mid) <= 0.0) == (fa <= 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let mut arcs = Vec::new();
    let mut start: Option<f64> = None;
    let mut prev_t = 0.0;
    let mut prev_in = kin(0.0) <= 0.0;
    if prev_in {
        start = Some(0.0);
    }
    for k in 1..=GRID {
        let t = half_pi * k as f64 / GRID as f64;
        let inside = kin(t) <= 0.0;
        if inside != prev_in {
            let edge = root(prev_t, t);
            if inside {
                start = Some(edge);
            } else if let Some(s) = start.take() {
                arcs.push((s, edge));
            }
        }
        prev_t = t;
        prev_in = inside;
    }
    if let Some(s) = start {
        arcs.push((s, half_pi));
    }
    arcs
}

/// Samples the annulus `‖𝐀^-1 p‖/R ∈ [1 - 2d, 1]` of the cut-off and checks
/// that no orbit of class α can live there. Planar only.
pub fn cutoff_leak_check(
    f: &ComposedHamiltonian,
    alpha: &HomologyClass,
    samples: usize,
    seed: u64,
) -> Result<LeakReport> {
    if f.dim() != 2 || alpha.dim() != 2 {
        return Err(Error::InvalidInput("cut-off leak check is planar".into()));
    }
    let radius = f.cone.radius();
    let d = f.blocks.params.d_plateau;
    let depth = f.system.depth();
    let bound = f.sigma.e_hi + depth;
    let a = alpha.as_real();
    let precondition_met = radius >= 10.0 * (f.sigma.e_hi.abs() + depth).max(a.norm());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LeakReport {
        passed: true,
        precondition_met,
        samples,
        low_energy_samples: 0,
        high_energy_samples: 0,
        min_speed_mismatch: f64::INFINITY,
        max_high_energy_speed: 0.0,
        max_high_energy_force: 0.0,
        witness: None,
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    for k in 0..samples {
        let rho = radius * rng.gen_range((1.0 - 2.0 * d)..=1.0);
        let theta = if k % 2 == 0 {
            rng.gen_range(0.0..half_pi)
        } else {
            let arcs = low_energy_arcs(f, rho, bound);
            let total: f64 = arcs.iter().map(|(s, e)| e - s).sum();
            if total > 0.0 {
                let mut u = rng.gen_range(0.0..total);
                let mut th = arcs[0].0;
                for (s, e) in &arcs {
                    if u <= e - s {
                        th = s + u;
                        break;
                    }
                    u -= e - s;
                }
                th
            } else {
                rng.gen_range(0.0..half_pi)
            }
        };
        let y = DVector::from_vec(vec![rho * theta.cos(), rho * theta.sin()]);
        let p = f.cone.from_y(&y);
        let q = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let z = DVector::from_vec(vec![p[0], p[1], q[0], q[1]]);
        let field = vector_field(f, &z);
        let (pd, qd) = ((field[0], field[1]), (field[2], field[3]));
        if f.system.kinetic(p.as_slice()) <= bound {
            report.low_energy_samples += 1;
            let mismatch = (qd.0 + qd.1 - (a[0] + a[1]))
                .abs()
                .max((qd.0 - qd.1 - (a[0] - a[1])).abs());
            report.min_speed_mismatch = report.min_speed_mismatch.min(mismatch);
            if mismatch < 0.5 && report.witness.is_none() {
                report.passed = false;
                report.witness = Some(z.iter().copied().collect());
            }
        } else {
            report.high_energy_samples += 1;
            let speed = (qd.0 * qd.0 + qd.1 * qd.1).sqrt();
            let force = (pd.0 * pd.0 + pd.1 * pd.1).sqrt();
            report.max_high_energy_speed = report.max_high_energy_speed.max(speed);
            report.max_high_energy_force = report.max_high_energy_force.max(force);
            if (speed >= 0.5 * a.norm() || force != 0.0) && report.witness.is_none() {
                report.passed = false;
                report.witness = Some(z.iter().copied().collect());
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(v: &[i64]) -> HomologyClass {
        HomologyClass::new(v.to_vec()).unwrap()
    }

    const SIG: [f64; 2] = [1.0, -1.0];

    #[test]
    fn integrable_closed_forms() {
        let r = integrable_orbit(&class(&[1, 0]), 0.5, &SIG).unwrap();
        assert!((r.period - 1.0).abs() < 1e-15);
        assert_eq!(&r.initial_state[..2], &[1.0, 0.0]);
        let r = integrable_orbit(&class(&[2, 1]), 0.375, &SIG).unwrap();
        assert!((r.period - 2.0).abs() < 1e-15);
        assert!(
            (r.initial_state[0] - 1.0).abs() < 1e-15 && (r.initial_state[1] + 0.5).abs() < 1e-15
        );
        assert!(matches!(
            integrable_orbit(&class(&[1, 2]), 0.5, &SIG),
            Err(Error::InfeasibleClass(_))
        ));
    }

    #[test]
    fn shooting_residuals() {
        let sys = MechanicalSystem::arnold(0.0);
        let seed = integrable_orbit(&class(&[2, 1]), 0.375, &SIG).unwrap();
        let r = shoot(
            &sys,
            &seed.alpha,
            &seed.state(),
            seed.period,
            1e-3,
            Scheme::Midpoint4,
        )
        .unwrap();
        assert!(r.norm() < 1e-12);
        let mut z = seed.state();
        z[0] += 1e-3;
        z[1] += 1e-3;
        let r = shoot(&sys, &seed.alpha, &z, seed.period, 1e-3, Scheme::Midpoint4).unwrap();
        assert!(r.norm() > 0.0 && r.norm() < 0.1);
        assert!(matches!(
            shoot(&sys, &seed.alpha, &z, 0.0, 1e-3, Scheme::Midpoint4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn contractible_loop_has_zero_class() {
        let z = DVector::from_vec(vec![0.0, 0.0, 0.3, 0.7]);
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![z.clone(), z],
            energies: vec![0.0, 0.0],
        };
        assert_eq!(homology_class(&traj).unwrap(), vec![0, 0]);
    }

    #[test]
    fn continuation_in_the_simplest_class() {
        let sys = MechanicalSystem::arnold(0.05);
        let opts = OrbitOptions::default();
        let a = class(&[1, 0]);
        let rec = find_orbit(&sys, &a, 0.5, 0.05, &opts).unwrap();
        assert!(rec.shooting_residual < 1e-8, "{rec:?}");
        let cert = certify(&sys, &rec, &opts).unwrap();
        assert!(cert.passed, "{cert:?}");
        let seed = find_orbit(&sys, &a, 0.5, 0.0, &opts).unwrap();
        assert_eq!(seed, integrable_orbit(&a, 0.5, &SIG).unwrap());
    }

    #[test]
    fn multiple_shooting_at_large_amplitude() {
        let sys = MechanicalSystem::arnold(0.25);
        let opts = OrbitOptions::default();
        let rec = find_orbit(&sys, &class(&[2, 1]), 0.95, 0.25, &opts).unwrap();
        let cert = certify(&sys, &rec, &opts).unwrap();
        assert!(cert.passed, "{cert:?}");
    }

    #[test]
    fn free_refinement_recovers_closed_form() {
        let d = integrable_oracle_deviation(&class(&[3, 1]), 0.25, &SIG, &OrbitOptions::default())
            .unwrap();
        assert!(d < 1e-10, "{d:e}");
    }

    #[test]
    fn degenerate_window_is_rejected() {
        let sys = MechanicalSystem::arnold(0.05);
        assert!(matches!(
            dense_scan(
                &sys,
                &class(&[1, 0]),
                &[(0.3, 0.3)],
                &OrbitOptions::default()
            ),
            Err(Error::Precondition(_))
        ));
    }
}
