//! Property suites run by the command-line verifiers. Each check reports
//! the measured quantity next to the threshold it was held to.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::HomologyClass;
use crate::critical::{
    find_plus_point, kernel_dimension, morse_bott_check, torus_monodromy, CriticalPointReport,
    NewtonOptions,
};
use crate::dynamics::{flow_steps, Fiberwise, Scheme};
use crate::error::Result;
use crate::jet::Jet;
use crate::model::{
    convolve_direct, second_derivative_bound_check, u_hat, u_hat_derivative_at_turning,
    u_hat_derivatives, Blocks,
};
use crate::mollifier;
use crate::profile::{ProfileEvaluator, SWITCHES};
use crate::quadrature::{integrate, integrate_pieces, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    /// First failing check.
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Model function, mollification and block identities.
pub fn model_suite(blocks: &Blocks, seed: u64) -> Result<SuiteReport> {
    let p = blocks.params;
    let curve = blocks.curve();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut c1: f64 = 0.0;
    for j in p.junctions() {
        let left = u_hat_derivatives(j - j.abs().max(1e-300) * f64::EPSILON, &p);
        let right = u_hat_derivatives(j, &p);
        c1 = c1
            .max((left[0] - right[0]).abs())
            .max((left[1] - right[1]).abs());
    }
    checks.push(Check::at_most("junction_c1_mismatch", c1, 1e-12));

    let h = 1e-6 * p.b_edge;
    let mid = 0.5 * p.b_edge;
    let fd = (u_hat(mid + h, &p) - u_hat(mid - h, &p)) / (2.0 * h);
    checks.push(Check::at_most(
        "turning_slope_vs_difference",
        (fd - u_hat_derivative_at_turning(&p)).abs(),
        1e-8,
    ));

    let mass = integrate(
        |x| mollifier::phi(x, p.eps),
        -p.eps,
        p.eps,
        Tolerance::default(),
    )?;
    checks.push(Check::at_most(
        "mollifier_mass_error",
        (mass - 1.0).abs(),
        1e-10,
    ));

    let min_slope = curve
        .grid()
        .map(|(_, v)| v[1])
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::at_least("min_mollified_slope", min_slope, 0.0));

    let mut below: f64 = f64::INFINITY;
    let mut above: f64 = f64::NEG_INFINITY;
    for (x, v) in curve.grid() {
        if x < mid {
            below = below.min(v[2]);
        } else if x > mid {
            above = above.max(v[2]);
        }
    }
    checks.push(Check::at_least("min_curvature_left_of_middle", below, 0.0));
    checks.push(Check::at_most("max_curvature_right_of_middle", above, 0.0));

    let bound = second_derivative_bound_check(curve, &p, 2.0);
    checks.push(Check::flag(
        "curvature_bound_near_edge",
        bound.passed,
        format!(
            "{} points, witness {:?}",
            bound.points_checked, bound.witness
        ),
    ));

    let (lo, hi) = curve.support();
    let mut interp: f64 = 0.0;
    for _ in 0..100 {
        let x = rng.gen_range(lo..hi);
        let direct = convolve_direct(x, &p, Tolerance::default())?;
        interp = interp.max((curve.eval(x).value - direct[0]).abs());
    }
    checks.push(Check::at_most("table_vs_direct_convolution", interp, 1e-9));

    let mut identity: f64 = 0.0;
    for s in [1.0, 2.0, 5.0] {
        let ds = p.d_s(s);
        for _ in 0..1000 {
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-1.5 * ds..=0.0));
            let shifted = y.map(|v| v + ds);
            identity =
                identity.max((blocks.big_u(s, &shifted).value - blocks.big_v(s, &y).value).abs());
        }
    }
    checks.push(Check::at_most("shifted_u_equals_v", identity, 1e-10));

    let radius = 100.0;
    let mut exact = true;
    for s in [1.0, 2.0, 5.0] {
        let ds = p.d_s(s);
        exact &= blocks.w_s(s, 1.0 - 2.0 * ds).value == 1.0;
        exact &= blocks.w_s(s, 1.0 - ds).value == 0.0;
        exact &= blocks.w_s(s, 1.0).value == 0.0;
        exact &= blocks.big_w(s, &DVector::zeros(2), radius).value == 1.0;
        exact &= blocks
            .big_w(
                s,
                &DVector::from_vec(vec![0.6 * radius, 0.8 * radius]),
                radius,
            )
            .value
            == 0.0;
    }
    exact &= blocks.u(0.0).value == 0.0 && blocks.u(p.b_edge + 5.0 * p.eps).value == 1.0;
    checks.push(Check::flag(
        "plateau_and_support_boundaries",
        exact,
        String::new(),
    ));

    let mut in_range = true;
    let mut radial_ok = true;
    for _ in 0..1000 {
        let x = rng.gen_range(-0.5..1.5);
        let s = rng.gen_range(1.0..5.0);
        for v in [
            blocks.u(x).value,
            blocks.u_s(s, x).value,
            blocks.v_s(s, x).value,
            blocks.w_s(s, x).value,
        ] {
            in_range &= (0.0..=1.0).contains(&v);
        }
        let r = rng.gen_range(0.0..1.0);
        radial_ok &= blocks.w_s(s, r).d1 <= 0.0;
    }
    checks.push(Check::flag("block_ranges", in_range, String::new()));
    checks.push(Check::flag(
        "cutoff_radially_nonincreasing",
        radial_ok,
        String::new(),
    ));

    Ok(SuiteReport::new("model", checks))
}

/// `s` values used by the monotonicity scan: 51 evenly spaced points on
/// `[-5, 5]` plus interior points of every smoothing window.
pub fn monotonicity_s_grid(eps_s: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (0..51).map(|k| -5.0 + 0.2 * k as f64).collect();
    for st in SWITCHES {
        for f in [-0.9, -0.6, -0.3, -0.1, 0.0, 0.1, 0.3, 0.6, 0.9] {
            s.push(st + f * eps_s);
        }
    }
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Sample momenta along the diagonal of the cone and across the transition
/// layers, in `y` coordinates.
pub fn monotonicity_y_grid() -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for a in [0.02, 0.1, 0.2, 0.5, 0.8, 0.95, 1.0, 1.1, 1.5, 3.0] {
        for b in [0.03, 0.25, 0.9, 1.05] {
            out.push(DVector::from_vec(vec![a, b]));
        }
    }
    out
}

/// Regime continuity, monotonicity, height, support and smoothing checks.
pub fn profile_suite(ev: &ProfileEvaluator, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let n = ev.dim();

    let mut cont: f64 = 0.0;
    for _ in 0..200 {
        let y = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.5));
        for st in SWITCHES {
            let left = ev.f_jet(st - 1e-13, &y).value;
            cont = cont.max((left - ev.f_jet(st, &y).value).abs());
        }
    }
    checks.push(Check::at_most("regime_continuity", cont, 1e-10));

    let mut agree: f64 = 0.0;
    for _ in 0..200 {
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..=1.0));
        agree = agree.max((ev.f_jet(-1.0, &y).value - ev.f_jet(0.0, &y).value).abs());
    }
    checks.push(Check::at_most(
        "f_minus_one_equals_f_zero_below_one",
        agree,
        1e-10,
    ));

    let mut min_ds = f64::INFINITY;
    for s in monotonicity_s_grid(ev.eps_s) {
        for y in monotonicity_y_grid() {
            min_ds = min_ds.min(ev.ds(s, &ev.cone.from_y(&y))?);
        }
    }
    checks.push(Check::at_least("min_ds_h", min_ds, -1e-8));

    let mut height = f64::INFINITY;
    for k in 0..101 {
        let s = -5.0 + 0.1 * k as f64;
        height = height.min(ev.value(s, ev.cone.p_star())? - ev.c);
    }
    checks.push(Check::at_least(
        "height_at_p_star_minus_c",
        height,
        f64::MIN_POSITIVE,
    ));

    let radius = ev.cone.radius();
    let mut leak: f64 = 0.0;
    for _ in 0..200 {
        let s = rng.gen_range(-5.0..5.0);
        let t = rng.gen_range(0.0..radius);
        let u = rng.gen_range(-radius..0.0);
        let th = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
        for y in [
            DVector::from_vec(vec![0.0, t]),
            DVector::from_vec(vec![t, u]),
            DVector::from_vec(vec![radius * th.cos(), radius * th.sin()]),
        ] {
            leak = leak.max(ev.value(s, &ev.cone.from_y(&y))?.abs());
        }
    }
    checks.push(Check::at_most("value_outside_sector", leak, 0.0));

    let probe = [
        DVector::from_vec(vec![0.97, 1.02]),
        DVector::from_vec(vec![0.1, 0.2]),
    ];
    let mut local: f64 = 0.0;
    let mut ftc: f64 = 0.0;
    for st in SWITCHES {
        for y in &probe {
            let p = ev.cone.from_y(y);
            for s in [st - 2.0 * ev.eps_s, st + 2.0 * ev.eps_s] {
                local = local.max((ev.value(s, &p)? - ev.h_tilde(s, &p).value).abs());
            }
            let e = ev.eps_s;
            let breaks: Vec<f64> = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|f| st + f * e)
                .collect();
            let total: f64 = integrate_pieces(
                |s| ev.ds(s, &p).unwrap_or(f64::NAN),
                &breaks,
                Tolerance {
                    abs_tol: 1e-11,
                    rel_tol: 1e-10,
                    max_intervals: 200,
                },
            )?;
            let inc = ev.h_tilde(st + e, &p).value - ev.h_tilde(st - e, &p).value;
            ftc = ftc.max((total - inc).abs());
        }
    }
    checks.push(Check::at_most("smoothing_is_local", local, 1e-10));
    checks.push(Check::at_most("window_increment_matches", ftc, 1e-8));

    let mut grad: f64 = 0.0;
    let d = ev.params().d_plateau;
    for s in [2.0, -2.0, 0.5, 1.0005] {
        let shift = if (0.0..1.0).contains(&s) {
            (1.0 - s) * (1.0 - d)
        } else {
            0.0
        };
        let p = ev
            .cone
            .from_y(&DVector::from_vec(vec![0.05 + shift, 0.08 + shift]));
        let j = ev.h(s, &p)?;
        let h = 1e-7;
        for i in 0..n {
            let mut pp = p.clone();
            pp[i] += h;
            let mut pm = p.clone();
            pm[i] -= h;
            let fd = (ev.value(s, &pp)? - ev.value(s, &pm)?) / (2.0 * h);
            grad = grad.max((fd - j.gradient[i]).abs() / (1.0 + fd.abs()));
        }
    }
    checks.push(Check::at_most("gradient_vs_differences", grad, 1e-6));

    Ok(SuiteReport::new("profile", checks))
}

/// Plus-point reports over an `s` grid.
pub fn lemma_sweep(
    ev: &ProfileEvaluator,
    alpha: &HomologyClass,
    s_grid: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<CriticalPointReport>> {
    s_grid
        .iter()
        .map(|&s| find_plus_point(ev, s, alpha, opts))
        .collect()
}

/// Time-one tangent map of the fibrewise flow of `jet`, integrated.
pub fn integrated_torus_monodromy<F>(jet: F, n: usize, p0: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Jet + Sync,
{
    let h = Fiberwise { n, jet };
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(p0);
    let fl = flow_steps(&h, &z, 1.0, 100, Scheme::Midpoint4, true)?;
    Ok(fl.tangent.expect("tangent requested"))
}

fn random_hessian(rng: &mut ChaCha8Rng, n: usize, degenerate: bool) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let mut lam = DVector::from_fn(n, |_, _| {
        let v: f64 = rng.gen_range(0.5..3.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    if degenerate {
        lam[rng.gen_range(0..n)] = 0.0;
    }
    let h = &q * DMatrix::from_diagonal(&lam) * q.transpose();
    0.5 * (&h + h.transpose())
}

/// Monodromy formula against integration, and the determinant criterion
/// against the kernel dimension of `monodromy - I`.
pub fn morse_bott_suite(
    ev: &ProfileEvaluator,
    reports: &[CriticalPointReport],
    seed: u64,
) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ev.dim();
    let mut checks = Vec::new();

    let mut mono: f64 = 0.0;
    let mut plus_ok = true;
    for r in reports {
        let s = r.s;
        let p0 = DVector::from_vec(r.p_plus.clone());
        let hess = ev.h(s, &p0)?.hessian;
        let jet = |p: &DVector<f64>| ev.h(s, p).unwrap_or_else(|_| Jet::zero(p.len()));
        let integrated = integrated_torus_monodromy(jet, n, &p0)?;
        mono = mono.max((integrated - torus_monodromy(&hess)).amax());
        plus_ok &= morse_bott_check(&hess)?;
    }
    checks.push(Check::at_most(
        "monodromy_formula_vs_integration",
        mono,
        1e-7,
    ));
    checks.push(Check::flag(
        "plus_tori_nondegenerate",
        plus_ok,
        String::new(),
    ));

    let mut agree = 0;
    let trials = 50;
    for k in 0..trials {
        let dim = 2 + k % 3;
        let h = random_hessian(&mut rng, dim, k % 2 == 1);
        let by_det = morse_bott_check(&h)?;
        let m = torus_monodromy(&h) - DMatrix::identity(2 * dim, 2 * dim);
        let by_kernel = kernel_dimension(&m, 1e-10) == dim;
        if by_det == by_kernel {
            agree += 1;
        }
    }
    checks.push(Check::at_least(
        "det_agrees_with_kernel",
        agree as f64,
        trials as f64,
    ));
    checks.push(Check::flag(
        "linear_hamiltonian_is_degenerate",
        !morse_bott_check(&DMatrix::zeros(n, n))?,
        String::new(),
    ));
    Ok(SuiteReport::new("morse_bott", checks))
}
