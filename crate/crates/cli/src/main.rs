mod commands;
mod config;
mod failure;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use failure::Failure;

/// Time-periodic water waves: shooting, Floquet stability, multiplier tracking.
#[derive(Debug, Parser)]
#[command(name = "waterwave", version)]
struct Cli {
    /// Run configuration (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the objective tolerance.
    #[arg(long, global = true)]
    tol_f: Option<f64>,
    /// Continue a sweep from the members already in the output directory.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Standing wave by shooting to rest at a quarter period.
    Standing,
    /// Traveling wave by shooting over one grid shift.
    Travel,
    /// Collision of two traveling waves (needs `start` = traveling solution).
    Counterprop,
    /// Sweep a family parameter from a seed solution.
    Continue,
    /// Floquet multipliers of a solution.
    Floquet { solution: PathBuf },
    /// Track multipliers across spectra ordered by family parameter.
    Match {
        #[arg(required = true, num_args = 2..)]
        spectra: Vec<PathBuf>,
        /// Manual corrections, `column a b` per line, 1-based.
        #[arg(long)]
        swaps: Option<PathBuf>,
    },
    /// Re-evaluate a solution file and print diagnostics.
    Diag { solution: PathBuf },
}

fn config(cli: &Cli) -> Result<RunConfig, Failure> {
    match &cli.config {
        Some(path) => RunConfig::load(path),
        None => RunConfig::parse("", std::path::Path::new(".")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Invalid("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Invalid(format!("thread pool: {e}")))?;
    }
    if cli.tol_f.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::Invalid("--tol-f must be positive".into()));
    }
    let cfg = config(&cli)?;
    let ctx = Context { out: cli.out.clone(), tol_f: cli.tol_f, resume: cli.resume };
    match &cli.command {
        Command::Standing => commands::standing(&cfg, &ctx),
        Command::Travel => commands::travel(&cfg, &ctx),
        Command::Counterprop => commands::counterprop(&cfg, &ctx),
        Command::Continue => commands::continuation(&cfg, &ctx),
        Command::Floquet { solution } => commands::floquet(&cfg, &ctx, solution),
        Command::Match { spectra, swaps } => commands::matching(&ctx, spectra, swaps.as_deref()),
        Command::Diag { solution } => commands::diag(solution),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
