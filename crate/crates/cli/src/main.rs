//! `homog`: sample coefficient fields, solve correctors, run Monte Carlo
//! studies and probes from TOML configs.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 inconsistent
//! data (resume state, corrupt files), 4 solver failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use homog::study::{StudyKind, StudyPlan};

use commands::Context;
use manifest::Outputs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] homog::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} study cells failed")]
    FailedCells(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use homog::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 2,
            CliError::FailedCells(_) => 4,
            CliError::Core(e) => match e {
                E::InconsistentResume(_) | E::Format(_) | E::GridMismatch(_) | E::Heterogeneous(_) => 3,
                E::NotConverged { .. } | E::Indefinite { .. } | E::Breakdown(_) | E::EnergyIdentity { .. } => 4,
                E::DegenerateGreen => 4,
                E::Io(_) => 2,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "homog", version, about = "Stochastic homogenization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed, replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "HOMOG_WORKERS")]
    workers: Option<usize>,
    /// Config patch `dotted.key=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Variance,
    Systematic,
    Gradient,
    Moments,
    Sensitivity,
}

impl From<StudyArg> for StudyKind {
    fn from(a: StudyArg) -> Self {
        match a {
            StudyArg::Variance => StudyKind::Variance,
            StudyArg::Systematic => StudyKind::Systematic,
            StudyArg::Gradient => StudyKind::Gradient,
            StudyArg::Moments => StudyKind::Moments,
            StudyArg::Sensitivity => StudyKind::Sensitivity,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Realize one coefficient field and dump it.
    Sample(Common),
    /// Solve the massive corrector on one realization.
    Solve(Common),
    /// Run a Monte Carlo study; resumes from complete cells in --out.
    Study {
        #[arg(value_enum)]
        kind: StudyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Green-function decay probes.
    Green(Common),
    /// Exact spectral-gap checks on the bundled enumerable ensembles.
    Sgcheck(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Sample(c) => ("sample".to_string(), c),
        Command::Solve(c) => ("solve".to_string(), c),
        Command::Study { kind, common } => (format!("study {}", StudyKind::from(*kind)), common),
        Command::Green(c) => ("green".to_string(), c),
        Command::Sgcheck(c) => ("sgcheck".to_string(), c),
    };
    let workers = match common.workers {
        Some(0) => return Err(CliError::Usage("--workers must be positive".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    // The pool may already exist when the binary is driven in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    let doc = config::load(common.config.as_deref(), &common.overrides)?;
    let ctx = Context { command: name, seed: common.seed, workers, started: manifest::now() };
    let mut out = Outputs::new(&common.out)?;
    let manifest = match &cli.command {
        Command::Sample(_) => commands::cmd_sample(&ctx, config::bind(doc)?, &mut out)?,
        Command::Solve(_) => commands::cmd_solve(&ctx, config::bind(doc)?, &mut out)?,
        Command::Green(_) => commands::cmd_green(&ctx, config::bind(doc)?, &mut out)?,
        Command::Sgcheck(_) => commands::cmd_sgcheck(&ctx, config::bind(doc)?, &mut out)?,
        Command::Study { kind, .. } => {
            let plan: StudyPlan = config::bind(doc)?;
            let (m, failed) = commands::cmd_study(&ctx, (*kind).into(), plan, &mut out)?;
            let m = out.finish(m)?;
            println!("{}", serde_json::to_string(&m.outputs).unwrap_or_default());
            return if failed > 0 { Err(CliError::FailedCells(failed)) } else { Ok(()) };
        }
    };
    let m = out.finish(manifest)?;
    println!("{}", serde_json::to_string(&m.outputs).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
