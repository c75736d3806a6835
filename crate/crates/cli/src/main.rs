//! `kimura`: run one experiment from a TOML config and write `summary.json`
//! plus CSV artifacts into the output directory.
//!
//! Exit codes: 0 success, 1 runtime error, 2 an assumption or barrier check
//! failed, 3 bad configuration.

mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig};
use kimura_core::Error;
use tasks::{Ctx, TaskError};

#[derive(Parser)]
#[command(name = "kimura", version, about = "Generalized Kimura diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    task: Task,
    /// Run configuration (TOML, schema "1").
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Task {
    /// Face classification and assumption checks.
    Check,
    /// Raw path simulation.
    Simulate,
    /// Transition mass per stratum at time t.
    Decompose,
    /// Hitting time and location histogram on one face.
    Hitting,
    /// Occupation near transverse faces.
    Occupation,
    /// Dirichlet heat kernel and caloric densities in 1D.
    Kernel,
    /// Duhamel and direct solves for time-dependent boundary data.
    Duhamel,
    /// PDE survival against Monte Carlo.
    Crosscheck,
    /// Probability of reaching a corner.
    Corner,
    /// Frequency of corner hits for the non-clean example.
    Counterexample,
    /// Doubling ratios of the hitting distribution.
    Doubling,
    /// Barrier function checks.
    Barriers,
    /// Growth ratio of the steady solution.
    Growth,
}

impl Task {
    fn name(self) -> &'static str {
        use Task::*;
        let i = match self {
            Check => 0,
            Simulate => 1,
            Decompose => 2,
            Hitting => 3,
            Occupation => 4,
            Kernel => 5,
            Duhamel => 6,
            Crosscheck => 7,
            Corner => 8,
            Counterexample => 9,
            Doubling => 10,
            Barriers => 11,
            Growth => 12,
        };
        tasks::TASKS[i]
    }
}

fn exit_code(e: &TaskError) -> u8 {
    match e {
        TaskError::Config(_) | TaskError::Core(Error::UnknownPreset(_)) => 3,
        TaskError::Core(
            Error::NotClean { .. } | Error::NoValidH { .. } | Error::NoValidParams(_) | Error::NoValidRho { .. },
        ) => 2,
        TaskError::Core(_) | TaskError::Io(_) => 1,
    }
}

fn describe(e: &TaskError) -> String {
    match e {
        TaskError::Config(c) => c.to_string(),
        TaskError::Core(c) => c.to_string(),
        TaskError::Io(m) => format!("i/o error: {m}"),
    }
}

fn load(cli: &Cli, task: &str) -> Result<RunConfig, ConfigError> {
    let path = cli.config.as_ref().ok_or(ConfigError::Missing {
        field: "--config",
        task: task.to_string(),
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(t) = &cfg.task {
        if t != task {
            return Err(ConfigError::Invalid {
                field: "task",
                message: format!("config is for `{t}` but the subcommand is `{task}`"),
            });
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let task = cli.task.name();
    let cfg = match load(&cli, task) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let out = tasks::output_dir(&cfg, cli.out.as_deref(), task);
    let ctx = Ctx {
        cfg: &cfg,
        task,
        out: out.clone(),
    };
    let result = tasks::run(&ctx);
    let (code, status, error, results) = match result {
        Ok(o) if o.assumptions_hold => (0, "ok", None, o.results),
        Ok(o) => (2, "assumption_failed", None, o.results),
        Err(e) => (exit_code(&e), "error", Some(describe(&e)), json!(null)),
    };
    let summary = json!({
        "schema": config::SCHEMA_VERSION,
        "task": task,
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": env!("KIMURA_GIT_DESCRIBE"),
        "seed": cfg.seed,
        "config": cfg,
        "status": status,
        "error": error,
        "results": results,
    });
    if let Some(msg) = &error {
        eprintln!("error: {msg}");
    }
    let written = std::fs::create_dir_all(&out).and_then(|_| {
        let text = serde_json::to_string_pretty(&summary).expect("summary is valid JSON");
        std::fs::write(out.join("summary.json"), text + "\n")
    });
    if let Err(e) = written {
        eprintln!("error: cannot write summary: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
