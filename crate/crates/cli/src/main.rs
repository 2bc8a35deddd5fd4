use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use torbit::{run, Command, ConfigError, ExperimentConfig};
use torbit_core::io::to_json_line;

#[derive(Parser, Debug)]
#[command(
    name = "torbit",
    version,
    about = "Profile Hamiltonian and periodic orbit experiments"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config; omitted keys take the Arnold defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the scans (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn report(status: &str, command: Command, invariant: &str, detail: &str) -> serde_json::Value {
    json!({
        "status": status,
        "command": command.name(),
        "invariant": invariant,
        "detail": detail,
    })
}

fn emit(value: &serde_json::Value, out: Option<&std::path::Path>) {
    let line = to_json_line(value).expect("json value");
    println!("{line}");
    if let Some(dir) = out {
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(dir.join("failure.json"), format!("{line}\n"));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            emit(
                &report("config_error", cli.command, "thread_pool", &e.to_string()),
                None,
            );
            return ExitCode::from(2);
        }
    }
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                emit(
                    &report("config_error", cli.command, &e.invariant, &e.detail),
                    None,
                );
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Err(e) = cfg.validate() {
        emit(
            &report("config_error", cli.command, &e.invariant, &e.detail),
            Some(&cfg.out),
        );
        return ExitCode::from(2);
    }
    match run(cli.command, &cfg, &cfg.out) {
        Ok(outcome) => match outcome.failure {
            None => {
                let files: Vec<String> = outcome
                    .files
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect();
                println!(
                    "{}",
                    json!({"status": "pass", "command": cli.command.name(), "files": files})
                );
                ExitCode::SUCCESS
            }
            Some(f) => {
                emit(
                    &report("fail", cli.command, &f.invariant, &f.detail),
                    Some(&cfg.out),
                );
                ExitCode::from(1)
            }
        },
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                emit(
                    &report("config_error", cli.command, &c.invariant, &c.detail),
                    Some(&cfg.out),
                );
                return ExitCode::from(2);
            }
            emit(
                &report("fail", cli.command, "computation", &format!("{e:#}")),
                Some(&cfg.out),
            );
            ExitCode::from(1)
        }
    }
}
