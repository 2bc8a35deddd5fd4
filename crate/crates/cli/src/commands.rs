use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use torbit_core::cone::HomologyClass;
use torbit_core::critical::{gradient_range_claim_check, NewtonOptions};
use torbit_core::dynamics::{ComposedHamiltonian, SigmaProfile};
use torbit_core::io::{fmt_f64, JsonlWriter};
use torbit_core::model::Blocks;
use torbit_core::orbits::{
    cutoff_leak_check, dense_scan, integrable_oracle_deviation, period_map_check, OrbitOptions,
    OrbitRecord, ScanResult,
};
use torbit_core::profile::ProfileEvaluator;
use torbit_core::suites::{lemma_sweep, model_suite, morse_bott_suite, profile_suite, SuiteReport};

use crate::config::ExperimentConfig;
use crate::plots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyModel,
    VerifyProfile,
    VerifyLemma,
    ScanOrbits,
    Arnold,
    ExportPlots,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyModel => "verify-model",
            Command::VerifyProfile => "verify-profile",
            Command::VerifyLemma => "verify-lemma",
            Command::ScanOrbits => "scan-orbits",
            Command::Arnold => "arnold",
            Command::ExportPlots => "export-plots",
        }
    }
}

/// The first invariant a run found violated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub invariant: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub failure: Option<Failure>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
    failure: Option<Failure>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            failure: None,
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let mut w = JsonlWriter::new(self.create(name)?);
        for it in items {
            w.write(it)?;
        }
        w.into_inner().flush()?;
        Ok(())
    }

    fn fail(&mut self, invariant: impl Into<String>, detail: impl Into<String>) {
        if self.failure.is_none() {
            self.failure = Some(Failure {
                invariant: invariant.into(),
                detail: detail.into(),
            });
        }
    }

    fn suite(&mut self, report: &SuiteReport) {
        if let Some(c) = report.first_failure() {
            let detail = format!(
                "value {} against threshold {} {}",
                c.value, c.threshold, c.detail
            );
            self.fail(
                format!("{}.{}", report.suite, c.name),
                detail.trim_end().to_string(),
            );
        }
    }

    fn finish(self) -> Outcome {
        Outcome {
            failure: self.failure,
            files: self.files,
        }
    }
}

fn evaluator(cfg: &ExperimentConfig) -> Result<ProfileEvaluator> {
    let blocks = Blocks::new(cfg.model_params()?)?;
    Ok(ProfileEvaluator::new(
        cfg.cone.clone(),
        blocks,
        cfg.c,
        cfg.eps_s,
    )?)
}

fn orbit_options(cfg: &ExperimentConfig) -> OrbitOptions {
    OrbitOptions {
        step: cfg.step,
        ..OrbitOptions::default()
    }
}

fn windows(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    cfg.windows.iter().map(|w| (w[0], w[1])).collect()
}

/// Executes `cmd`, writing its artifacts under `out`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let mut sink = Sink::new(out)?;
    match cmd {
        Command::VerifyModel => {
            let blocks = Blocks::new(cfg.model_params()?)?;
            let report = model_suite(&blocks, cfg.seed)?;
            sink.jsonl("reports.jsonl", std::slice::from_ref(&report))?;
            sink.suite(&report);
        }
        Command::VerifyProfile => {
            let report = profile_suite(&evaluator(cfg)?, cfg.seed)?;
            sink.jsonl("reports.jsonl", std::slice::from_ref(&report))?;
            sink.suite(&report);
        }
        Command::VerifyLemma => verify_lemma(cfg, &mut sink)?,
        Command::ScanOrbits => {
            let scans = scan(cfg)?;
            write_scans(cfg, &mut sink, &scans)?;
        }
        Command::Arnold => arnold(cfg, &mut sink)?,
        Command::ExportPlots => plots::export(cfg, &mut |name| sink.create(name))?,
    }
    Ok(sink.finish())
}

fn verify_lemma(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let ev = evaluator(cfg)?;
    let opts = NewtonOptions {
        seed: cfg.seed,
        ..NewtonOptions::default()
    };
    let mut reports = Vec::new();
    for alpha in &cfg.lemma.alpha {
        reports.extend(lemma_sweep(&ev, alpha, &cfg.lemma.s_grid, &opts)?);
    }
    sink.jsonl("reports.jsonl", &reports)?;
    for r in &reports {
        let flags = [
            ("residual_ok", r.residual_ok),
            ("negative_definite", r.negative_definite),
            ("action_ok", r.action_ok),
            ("minus_ok", r.minus_ok),
            ("unique", r.unique),
        ];
        if let Some((name, _)) = flags.iter().find(|(_, ok)| !ok) {
            sink.fail(
                format!("critical_point_report.{name}"),
                format!("s = {} alpha = {}", r.s, r.alpha),
            );
        }
    }
    let coverage = gradient_range_claim_check(ev.params(), 0.5)?;
    let morse = morse_bott_suite(&ev, &reports, cfg.seed)?;
    sink.jsonl(
        "checks.jsonl",
        &[
            serde_json::to_value(&coverage)?,
            serde_json::to_value(&morse)?,
        ],
    )?;
    if !coverage.passed {
        sink.fail("gradient_range_claim", format!("{coverage:?}"));
    }
    sink.suite(&morse);
    Ok(())
}

fn scan(cfg: &ExperimentConfig) -> Result<Vec<(HomologyClass, ScanResult)>> {
    let system = cfg.system()?;
    let opts = orbit_options(cfg);
    let w = windows(cfg);
    let out: Vec<Result<(HomologyClass, ScanResult)>> = cfg
        .classes
        .par_iter()
        .map(|a| Ok((a.clone(), dense_scan(&system, a, &w, &opts)?)))
        .collect();
    out.into_iter().collect()
}

fn write_scans(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    scans: &[(HomologyClass, ScanResult)],
) -> Result<()> {
    let records: Vec<&OrbitRecord> = scans.iter().flat_map(|(_, s)| &s.records).collect();
    sink.jsonl("orbits.jsonl", &records)?;
    let mut csv = csv::Writer::from_writer(sink.create("summary.csv")?);
    csv.write_record(["alpha", "e_lo", "e_hi", "s", "T", "residual", "certified"])?;
    for r in &records {
        let [lo, hi] = r.window.unwrap_or([f64::NAN, f64::NAN]);
        csv.write_record([
            r.alpha.to_string(),
            fmt_f64(lo),
            fmt_f64(hi),
            fmt_f64(r.energy),
            fmt_f64(r.period),
            fmt_f64(r.shooting_residual),
            r.is_certified().to_string(),
        ])?;
    }
    csv.flush()?;
    let unresolved: Vec<_> = scans.iter().flat_map(|(_, s)| &s.unresolved).collect();
    if let Some(u) = unresolved.first() {
        sink.fail(
            "orbit_found_in_every_window",
            format!(
                "class {} window ({}, {}): {}",
                u.alpha, u.window[0], u.window[1], u.reason
            ),
        );
    }
    let expected = cfg.classes.len() * cfg.windows.len();
    if unresolved.is_empty() && records.len() != expected {
        sink.fail(
            "orbit_found_in_every_window",
            format!("{} of {expected} records", records.len()),
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PipelineLine<T: Serialize> {
    kind: &'static str,
    alpha: HomologyClass,
    window: [f64; 2],
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Deviation {
    energy: f64,
    deviation: f64,
    passed: bool,
}

fn arnold(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let scans = scan(cfg)?;
    write_scans(cfg, sink, &scans)?;
    let system = cfg.system()?;
    let blocks = Blocks::new(cfg.model_params()?)?;
    let opts = orbit_options(cfg);
    let mut lines: Vec<serde_json::Value> = Vec::new();
    let jobs: Vec<(HomologyClass, [f64; 2])> = cfg
        .classes
        .iter()
        .flat_map(|a| cfg.windows.iter().map(move |w| (a.clone(), *w)))
        .collect();
    let composed: Vec<ComposedHamiltonian> = jobs
        .iter()
        .map(|(a, w)| {
            let sigma = SigmaProfile::new(w[0], w[1], cfg.sigma_height(a))?;
            Ok(ComposedHamiltonian::new(
                system.clone(),
                sigma,
                cfg.cone.clone(),
                blocks.clone(),
            )?)
        })
        .collect::<Result<_>>()?;

    for (_, scan) in &scans {
        for rec in &scan.records {
            let w = rec.window.expect("scan records carry their window");
            let k = jobs
                .iter()
                .position(|(a, jw)| *a == rec.alpha && *jw == w)
                .expect("window from the config");
            match period_map_check(&composed[k], rec, &opts) {
                Ok(pm) => {
                    if !pm.passed {
                        sink.fail(
                            "composed_orbit_closes",
                            format!("class {} window {w:?}: {pm:?}", rec.alpha),
                        );
                    }
                    lines.push(serde_json::to_value(PipelineLine {
                        kind: "period_map",
                        alpha: rec.alpha.clone(),
                        window: w,
                        body: pm,
                    })?);
                }
                Err(e) => sink.fail(
                    "composed_orbit_in_plateau",
                    format!("class {} window {w:?}: {e}", rec.alpha),
                ),
            }
        }
    }

    let leaks: Vec<_> = jobs
        .par_iter()
        .zip(composed.par_iter())
        .map(|((a, _), f)| cutoff_leak_check(f, a, cfg.leak_samples, cfg.seed))
        .collect::<std::result::Result<_, _>>()?;
    for ((a, w), leak) in jobs.iter().zip(leaks) {
        if !leak.passed {
            sink.fail(
                "cutoff_leak",
                format!("class {a} window {w:?}: witness {:?}", leak.witness),
            );
        }
        lines.push(serde_json::to_value(PipelineLine {
            kind: "cutoff_leak",
            alpha: a.clone(),
            window: *w,
            body: leak,
        })?);
    }

    for (a, w) in &jobs {
        let energy = 0.5 * (w[0] + w[1]);
        let dev = integrable_oracle_deviation(a, energy, system.signature(), &opts)?;
        if !(dev < 1e-10) {
            sink.fail(
                "integrable_oracle",
                format!("class {a} energy {energy}: deviation {dev}"),
            );
        }
        lines.push(serde_json::to_value(PipelineLine {
            kind: "integrable_oracle",
            alpha: a.clone(),
            window: *w,
            body: Deviation {
                energy,
                deviation: dev,
                passed: dev < 1e-10,
            },
        })?);
    }
    sink.jsonl("reports.jsonl", &lines)?;
    Ok(())
}
