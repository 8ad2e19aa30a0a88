mod commands;
mod config;
mod error;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lti-bounds",
    version,
    about = "Lower bounds and Monte Carlo checks for LTI system identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic bound quantities for one system.
    Bounds(Args),
    /// van Trees bound and explicit minimax rates.
    Minimax(Args),
    /// Monte Carlo risk of least squares.
    Risk(Args),
    /// Monte Carlo identity and bound checks.
    Verify(Args),
    /// Draws from the operator-ball prior.
    SamplePrior(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Args) {
        match self {
            Self::Bounds(a) => ("bounds", a),
            Self::Minimax(a) => ("minimax", a),
            Self::Risk(a) => ("risk", a),
            Self::Verify(a) => ("verify", a),
            Self::SamplePrior(a) => ("sample-prior", a),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, args) = cli.command.parts();
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_json("{}")?,
    };
    if let Some(cmd) = &cfg.run.command {
        if cmd != name {
            return Err(CliError::Parse(format!(
                "field `run.command` is \"{cmd}\" but the subcommand is \"{name}\""
            )));
        }
    }
    cfg.run.command = Some(name.to_string());
    if args.seed.is_some() {
        cfg.run.seed = args.seed;
    }
    if args.format.is_some() {
        cfg.output.format = args.format;
    }
    if args.out.is_some() {
        cfg.output.path = args.out.clone();
    }
    let format = *cfg.output.format.get_or_insert(Format::Csv);
    cfg.resolve_defaults();
    cfg.validate()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.workers {
        if k == 0 {
            return Err(CliError::Precondition(
                "--workers must be at least 1".into(),
            ));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Precondition(format!("cannot start worker pool: {e}")))?;

    let (report, failed) = pool.install(|| -> Result<_, CliError> {
        Ok(match name {
            "bounds" => (commands::run_bounds(&cfg)?, 0),
            "minimax" => (commands::run_minimax(&cfg)?, 0),
            "risk" => (commands::run_risk(&cfg)?, 0),
            "sample-prior" => (commands::run_sample_prior(&cfg)?, 0),
            _ => {
                let out = commands::run_verify(&cfg)?;
                (out.report, out.failed)
            }
        })
    })?;

    match &cfg.output.path {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            report.write(&cfg, format, &mut w)?;
            w.flush().map_err(|e| CliError::Output(e.to_string()))?;
        }
        None => {
            let stdout = io::stdout();
            report.write(&cfg, format, stdout.lock())?;
        }
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
