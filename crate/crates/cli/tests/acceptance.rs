use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use torbit::ExperimentConfig;
use torbit_core::cone::HomologyClass;
use torbit_core::critical::{gradient_range_claim_check, morse_bott_check, NewtonOptions};
use torbit_core::dynamics::{integrate_steps, ComposedHamiltonian, Hamiltonian, SigmaProfile};
use torbit_core::model::Blocks;
use torbit_core::orbits::{
    cutoff_leak_check, dense_scan, integrable_oracle_deviation, integrable_orbit, OrbitOptions,
};
use torbit_core::profile::ProfileEvaluator;
use torbit_core::suites::{lemma_sweep, model_suite, morse_bott_suite, profile_suite, SuiteReport};

const JUNCTION_TOL: f64 = 1e-12;
const U_EQUALS_V_TOL: f64 = 1e-10;
const REGIME_TOL: f64 = 1e-10;
const MONOTONE_FLOOR: f64 = -1e-8;
const NEWTON_RESIDUAL: f64 = 1e-9;
const NEGATIVE_EIGEN: f64 = -1e-8;
const MODULUS_TOL: f64 = 1e-8;
const MONODROMY_TOL: f64 = 1e-7;
const SHOOTING_TOL: f64 = 1e-8;
const WINDING_TOL: f64 = 1e-8;
const DET_TOL: f64 = 1e-7;
const ORACLE_TOL: f64 = 1e-10;
const LEAK_SAMPLES: usize = 10_000;

struct Ledger {
    failed: Vec<usize>,
}

impl Ledger {
    fn record(&mut self, n: usize, ok: bool, elapsed: Duration, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] criterion {n} ({:.1} s): {detail}",
            elapsed.as_secs_f64()
        );
        if !ok {
            self.failed.push(n);
        }
    }
}

fn check<'a>(r: &'a SuiteReport, name: &str) -> &'a torbit_core::suites::Check {
    r.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("{} has no check {name}", r.suite))
}

fn evaluator(cfg: &ExperimentConfig) -> ProfileEvaluator {
    let blocks = Blocks::new(cfg.model_params().unwrap()).unwrap();
    ProfileEvaluator::new(cfg.cone.clone(), blocks, cfg.c, cfg.eps_s).unwrap()
}

fn criterion_1_2(cfg: &ExperimentConfig, ledger: &mut Ledger) {
    let t = Instant::now();
    let p = cfg.model_params().unwrap();
    assert_eq!((p.delta, p.eps), (1e-2, 1e-4));
    let blocks = Blocks::new(p).unwrap();
    let r = model_suite(&blocks, 11).unwrap();
    let elapsed = t.elapsed();
    let junction = check(&r, "junction_c1_mismatch");
    let slope = check(&r, "min_mollified_slope");
    let left = check(&r, "min_curvature_left_of_middle");
    let right = check(&r, "max_curvature_right_of_middle");
    let bound = check(&r, "curvature_bound_near_edge");

    // the edge bound rechecked on a fine grid of the interpolated curve
    let b = p.b_edge;
    let mut worst = f64::NEG_INFINITY;
    let m = 4000;
    for k in 0..m {
        let x = b - 2.0 * p.delta + (2.0 * p.delta - p.eps) * (k as f64 + 1.0) / m as f64;
        worst = worst.max(blocks.u(x).d2);
    }
    let edge_ok = worst <= -1.0 / (3.0 * p.delta);

    let ok1 = junction.value < JUNCTION_TOL
        && slope.value >= 0.0
        && left.value >= 0.0
        && right.value <= 0.0
        && bound.passed
        && edge_ok
        && elapsed < Duration::from_secs(10);
    ledger.record(
        1,
        ok1,
        elapsed,
        format!(
            "junction {:.2e}, min slope {:.2e}, curvature signs {:.2e}/{:.2e}, max u'' on edge {:.4e} vs {:.4e}",
            junction.value,
            slope.value,
            left.value,
            right.value,
            worst,
            -1.0 / (3.0 * p.delta)
        ),
    );

    let t = Instant::now();
    let ident = check(&r, "shifted_u_equals_v");
    let plateaus = check(&r, "plateau_and_support_boundaries");
    let ok2 = ident.value < U_EQUALS_V_TOL && plateaus.passed;
    ledger.record(
        2,
        ok2,
        t.elapsed(),
        format!(
            "U(y + d 1) - V(y) max {:.2e} on 3000 points, boundaries exact {}",
            ident.value, plateaus.passed
        ),
    );
}

fn criterion_3(cfg: &ExperimentConfig, ledger: &mut Ledger) {
    let t = Instant::now();
    let ev = evaluator(cfg);
    let r = profile_suite(&ev, 12).unwrap();
    let elapsed = t.elapsed();
    let cont = check(&r, "regime_continuity");
    let ds = check(&r, "min_ds_h");
    let outside = check(&r, "value_outside_sector");
    let ok = cont.value < REGIME_TOL
        && ds.value >= MONOTONE_FLOOR
        && outside.value == 0.0
        && r.passed
        && elapsed < Duration::from_secs(60);
    ledger.record(
        3,
        ok,
        elapsed,
        format!(
            "continuity {:.2e}, min ds H {:.2e}, outside value {:.1e}, suite {:?}",
            cont.value,
            ds.value,
            outside.value,
            r.first_failure().map(|c| &c.name)
        ),
    );
}

fn criterion_4_6(cfg: &ExperimentConfig, ledger: &mut Ledger) {
    let t = Instant::now();
    let ev = evaluator(cfg);
    let alpha = HomologyClass::new(vec![1, 0]).unwrap();
    assert_eq!(cfg.cone.p_star().as_slice(), &[2.0, 0.0]);
    assert_eq!(cfg.c, 3.0);
    let grid = [-5.0, -3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0, 5.0];
    let reports = lemma_sweep(&ev, &alpha, &grid, &NewtonOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let threshold = cfg.c - cfg.cone.pairing(&alpha);
    let mut bad = Vec::new();
    let mut worst_res: f64 = 0.0;
    let mut worst_eig = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    for r in &reports {
        let eig = r
            .hessian_eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        worst_res = worst_res.max(r.gradient_residual);
        worst_eig = worst_eig.max(eig);
        min_gap = min_gap.min(r.action_value - threshold);
        let ok = r.gradient_residual < NEWTON_RESIDUAL
            && eig < NEGATIVE_EIGEN
            && r.action_value > threshold
            && r.minus_candidates.iter().all(|m| m.action < 0.0)
            && r.all_ok();
        if !ok {
            bad.push(r.s);
        }
    }
    let ok4 = (threshold - 1.0).abs() < 1e-15
        && reports.len() == grid.len()
        && bad.is_empty()
        && elapsed < Duration::from_secs(120);
    ledger.record(
        4,
        ok4,
        elapsed,
        format!("residual {worst_res:.2e}, max eigenvalue {worst_eig:.3e}, action - 1 >= {min_gap:.3e}, failing s {bad:?}"),
    );

    let t = Instant::now();
    let cov = gradient_range_claim_check(ev.params(), 0.5).unwrap();
    let ok5 = cov.targets == 400 && cov.converged == 400 && cov.max_modulus_error < MODULUS_TOL;
    ledger.record(
        5,
        ok5,
        t.elapsed(),
        format!(
            "{}/{} converged, modulus error {:.2e}",
            cov.converged, cov.targets, cov.max_modulus_error
        ),
    );

    let t = Instant::now();
    let mb = morse_bott_suite(&ev, &reports, 13).unwrap();
    let mono = check(&mb, "monodromy_formula_vs_integration");
    let agree = check(&mb, "det_agrees_with_kernel");
    // a Hamiltonian linear in p has vanishing Hessian
    let linear = morse_bott_check(&DMatrix::zeros(2, 2)).unwrap();
    let ok6 = mono.value < MONODROMY_TOL && agree.value == 50.0 && agree.passed && !linear;
    ledger.record(
        6,
        ok6,
        t.elapsed(),
        format!(
            "monodromy error {:.2e}, det/kernel agreement {}/50, linear case {linear}",
            mono.value, agree.value
        ),
    );
}

/// Closed-form period and initial momenta of the free flow `H = Σ s_i p_i²/2`,
/// from `s_i p_i T = α_i` and `H = E`.
fn free_orbit(alpha: &[i64], energy: f64, signature: &[f64]) -> (f64, Vec<f64>) {
    let q: f64 = alpha
        .iter()
        .zip(signature)
        .map(|(&a, &s)| (a * a) as f64 / s)
        .sum();
    let period = (q / (2.0 * energy)).sqrt();
    let p = alpha
        .iter()
        .zip(signature)
        .map(|(&a, &s)| a as f64 / (s * period))
        .collect();
    (period, p)
}

fn criterion_7(cfg: &ExperimentConfig, ledger: &mut Ledger) {
    let system = cfg.system().unwrap();
    assert_eq!(system.amplitude(), 0.05);
    let opts = OrbitOptions::default();
    let windows: Vec<(f64, f64)> = cfg.windows.iter().map(|w| (w[0], w[1])).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let t = Instant::now();
    let scans: Vec<_> = pool.install(|| {
        cfg.classes
            .iter()
            .map(|a| (a.clone(), dense_scan(&system, a, &windows, &opts).unwrap()))
            .collect()
    });
    let elapsed = t.elapsed();

    let mut problems = Vec::new();
    let mut worst = [0.0f64; 4];
    for (alpha, scan) in &scans {
        if !scan.unresolved.is_empty() || scan.records.len() != windows.len() {
            problems.push(format!(
                "{alpha}: {} records, {:?}",
                scan.records.len(),
                scan.unresolved
            ));
        }
        for (rec, &(lo, hi)) in scan.records.iter().zip(&windows) {
            let z0 = rec.state();
            let e = system.value(&z0);
            let traj = integrate_steps(&system, &z0, rec.period, rec.steps, opts.scheme).unwrap();
            let n = alpha.dim();
            let (a, b) = (traj.first(), traj.last());
            let mut wind: f64 = 0.0;
            for i in 0..n {
                wind = wind.max((b[n + i] - a[n + i] - alpha.components()[i] as f64).abs());
            }
            let det = (DMatrix::from_fn(2 * n, 2 * n, |i, j| rec.monodromy[i][j]).determinant()
                - 1.0)
                .abs();
            let cert = rec.certificate.as_ref();
            let ok = rec.window == Some([lo, hi])
                && cert.is_some_and(|c| c.passed && c.winding == alpha.components())
                && rec.shooting_residual < SHOOTING_TOL
                && e > lo
                && e < hi
                && wind < WINDING_TOL
                && det < DET_TOL;
            worst = [
                worst[0].max(rec.shooting_residual),
                worst[1].max((e - rec.energy).abs()),
                worst[2].max(wind),
                worst[3].max(det),
            ];
            if !ok {
                problems.push(format!("{alpha} ({lo}, {hi}): {rec:?}"));
            }
        }
    }

    let mut oracle: f64 = 0.0;
    for alpha in &cfg.classes {
        for &(lo, hi) in &windows {
            let energy = 0.5 * (lo + hi);
            let rec = integrable_orbit(alpha, energy, system.signature()).unwrap();
            let (period, p) = free_orbit(alpha.components(), energy, system.signature());
            oracle = oracle.max((rec.period - period).abs());
            for (x, y) in rec.initial_state.iter().zip(&p) {
                oracle = oracle.max((x - y).abs());
            }
            oracle = oracle.max(
                integrable_oracle_deviation(alpha, energy, system.signature(), &opts).unwrap(),
            );
        }
    }
    let ok = problems.is_empty() && oracle < ORACLE_TOL && elapsed < Duration::from_secs(600);
    ledger.record(
        7,
        ok,
        elapsed,
        format!(
            "{} records, residual {:.2e}, energy gap {:.2e}, winding {:.2e}, |det - 1| {:.2e}, oracle {oracle:.2e}; {problems:?}",
            scans.iter().map(|(_, s)| s.records.len()).sum::<usize>(),
            worst[0],
            worst[1],
            worst[2],
            worst[3],
        ),
    );
}

fn criterion_8(cfg: &ExperimentConfig, ledger: &mut Ledger) {
    let t = Instant::now();
    assert_eq!(cfg.cone.radius(), 100.0);
    let system = cfg.system().unwrap();
    let blocks = Blocks::new(cfg.model_params().unwrap()).unwrap();
    let alpha = HomologyClass::new(vec![1, 0]).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for w in &cfg.windows {
        let sigma = SigmaProfile::new(w[0], w[1], cfg.sigma_height(&alpha)).unwrap();
        let f = ComposedHamiltonian::new(system.clone(), sigma, cfg.cone.clone(), blocks.clone())
            .unwrap();
        let r = cutoff_leak_check(&f, &alpha, LEAK_SAMPLES, 5).unwrap();
        ok &= r.passed
            && r.precondition_met
            && r.samples == LEAK_SAMPLES
            && r.low_energy_samples > 0
            && r.high_energy_samples > 0
            && r.max_high_energy_force == 0.0;
        lines.push(format!(
            "({}, {}): mismatch {:.4}, plateau speed {:.3}, plateau force {:e}, {}+{} samples",
            w[0],
            w[1],
            r.min_speed_mismatch,
            r.max_high_energy_speed,
            r.max_high_energy_force,
            r.low_energy_samples,
            r.high_energy_samples
        ));
    }
    ledger.record(8, ok, t.elapsed(), lines.join("; "));
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9(ledger: &mut Ledger) {
    let t = Instant::now();
    let commands = [
        "verify-model",
        "verify-profile",
        "verify-lemma",
        "scan-orbits",
        "arnold",
        "export-plots",
    ];
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut statuses = Vec::new();
    for dir in &runs {
        for cmd in commands {
            let st = Process::new(env!("CARGO_BIN_EXE_torbit"))
                .args([cmd, "--seed", "42", "--out"])
                .arg(dir.path().join(cmd))
                .output()
                .unwrap();
            statuses.push(st.status.code());
        }
    }
    let a = read_tree(runs[0].path());
    let b = read_tree(runs[1].path());
    let files = a.len();
    let expected = 1 + 1 + 2 + 2 + 3 + 4;
    let ok = statuses.iter().all(|c| *c == Some(0)) && files == expected && a == b;
    ledger.record(
        9,
        ok,
        t.elapsed(),
        format!(
            "{files} files per run, byte-identical {}, exit codes {statuses:?}",
            a == b
        ),
    );
}

#[test]
fn acceptance() {
    let cfg = ExperimentConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.model.delta, 1e-2);
    assert_eq!(DVector::from_vec(vec![2.0, 0.0]), *cfg.cone.p_star());
    let mut ledger = Ledger { failed: Vec::new() };
    criterion_1_2(&cfg, &mut ledger);
    criterion_3(&cfg, &mut ledger);
    criterion_4_6(&cfg, &mut ledger);
    criterion_7(&cfg, &mut ledger);
    criterion_8(&cfg, &mut ledger);
    criterion_9(&mut ledger);
    assert!(
        ledger.failed.is_empty(),
        "failed criteria {:?}",
        ledger.failed
    );
}
