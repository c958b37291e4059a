//! Batch command-line front end. Every subcommand reads a JSON run config,
//! executes one pipeline, writes its artifacts plus a provenance manifest,
//! and reports machine-readable status: a JSON line on stdout on success,
//! a JSON error object on stderr otherwise. Exit codes: 0 success, 2
//! validation failure, 3 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hdsurv::error::{Error, Result};
use hdsurv_cli::artifacts::{self, Manifest, Versions};
use hdsurv_cli::runner::{self, CommandKind};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "hdsurv",
    version,
    about = "High-dimensional survival analysis pipelines driven by JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as CSV.
    Simulate(CommonArgs),
    /// Fit a Cox-family model: MPLE, penalized path, or network.
    Fit(FitArgs),
    /// Score held-out covariates with a fitted model artifact.
    Predict(CommonArgs),
    /// Rank covariates by marginal importance and keep the strongest.
    Screen(CommonArgs),
    /// Resampled post-selection inference.
    Spares(CommonArgs),
    /// Censored quantile regression over a tau grid.
    Cqr(CommonArgs),
    /// Dantzig selector for the accelerated failure time model.
    Dantzig(CommonArgs),
    /// Survival support vector machine.
    Svm(CommonArgs),
    /// Random survival forest.
    Forest(CommonArgs),
    /// Gradient boosting of the Cox loss.
    Boost(CommonArgs),
    /// Semi-competing risks illness-death frailty model.
    Scr(CommonArgs),
    /// Cross-validated penalized path.
    Cv(CommonArgs),
}

impl Command {
    fn split(&self) -> (CommandKind, &CommonArgs, Option<&str>) {
        match self {
            Command::Simulate(a) => (CommandKind::Simulate, a, None),
            Command::Fit(a) => (CommandKind::Fit, &a.common, a.method.as_deref()),
            Command::Predict(a) => (CommandKind::Predict, a, None),
            Command::Screen(a) => (CommandKind::Screen, a, None),
            Command::Spares(a) => (CommandKind::Spares, a, None),
            Command::Cqr(a) => (CommandKind::Cqr, a, None),
            Command::Dantzig(a) => (CommandKind::Dantzig, a, None),
            Command::Svm(a) => (CommandKind::Svm, a, None),
            Command::Forest(a) => (CommandKind::Forest, a, None),
            Command::Boost(a) => (CommandKind::Boost, a, None),
            Command::Scr(a) => (CommandKind::Scr, a, None),
            Command::Cv(a) => (CommandKind::Cv, a, None),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the worker pool; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config input path.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Overrides the config output path.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Shorthand method name (cox, cox-lasso, cox-ridge); richer method
    /// specs go in the config file.
    #[arg(long)]
    method: Option<String>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                std::process::exit(0);
            }
            emit_error("validation", &err.render().to_string());
            std::process::exit(2);
        }
    };
    match execute(&cli) {
        Ok(()) => std::process::exit(0),
        Err(err) => {
            emit_error(error_kind(&err), &err.to_string());
            std::process::exit(exit_code(&err));
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let (kind, common, method) = cli.command.split();

    let text = fs::read_to_string(&common.config).map_err(|e| {
        Error::validation(format!("cannot read config {}: {e}", common.config.display()))
    })?;
    let mut config: Value = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("config is not valid JSON: {e}")))?;
    runner::apply_overrides(
        &mut config,
        kind,
        common.seed,
        common.threads,
        common.input.as_deref(),
        common.output.as_deref(),
        method,
    )?;
    let threads = runner::thread_bound(&config)?;

    let outcome = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::validation(format!("cannot build a {t}-thread pool: {e}")))?
            .install(|| runner::run(kind, config)),
        None => runner::run(kind, config),
    }?;

    let manifest = Manifest {
        command: kind.name().to_string(),
        config: artifacts::sha256_file(&common.config)?,
        inputs: outcome
            .inputs
            .iter()
            .map(|p| artifacts::sha256_file(p))
            .collect::<Result<_>>()?,
        outputs: outcome
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        seed: outcome.seed,
        threads,
        versions: Versions::current(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = artifacts::manifest_path(&outcome.primary_output);
    artifacts::write_json(&manifest_path, &manifest)?;

    let mut written = manifest.outputs.clone();
    written.push(manifest_path.display().to_string());
    println!(
        "{}",
        serde_json::json!({"status": "ok", "command": kind.name(), "outputs": written})
    );
    Ok(())
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Validation(_) => "validation",
        Error::Numerical(_) => "numerical",
        Error::Unsupported(_) => "unsupported",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({"error": {"kind": kind, "message": message}})
    );
}
