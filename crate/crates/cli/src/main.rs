use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use designinf_cli::{apply_overrides, exit_code, run, Command, Overrides, EXIT_CHECK_FAILED};
use designinf_core::io::{write_report, RunConfig};
use designinf_core::Error;

/// Design-based inference under Poisson rejective assignment.
#[derive(Parser)]
#[command(name = "designinf", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Population, inclusion probabilities, theory and Monte Carlo.
    Simulate(Flags),
    /// Estimates on observed data or on one simulated draw.
    Analyze(Flags),
    /// Estimates plus covariance sensitivity bands.
    Sensitivity(Flags),
    /// Compares the analytic results with full enumeration.
    OracleCheck(Flags),
}

#[derive(Args)]
struct Flags {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the Monte Carlo master seed and the analysis seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn execute(command: Command, flags: &Flags) -> Result<bool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(flags.threads)
        .build_global()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let mut cfg = RunConfig::from_path(&flags.config)?;
    apply_overrides(
        &mut cfg,
        Overrides {
            seed: flags.seed,
            reps: flags.reps,
        },
    )?;
    let base = flags.config.parent().map(PathBuf::from).unwrap_or_default();
    let outcome = run(command, &cfg, &base)?;
    match &flags.out {
        Some(path) => {
            write_report(&outcome.report, path)?;
            log::info!("report written to {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&outcome.report)?),
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Analyze(f) => (Command::Analyze, f),
        Sub::Sensitivity(f) => (Command::Sensitivity, f),
        Sub::OracleCheck(f) => (Command::OracleCheck, f),
    };
    match execute(command, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("one or more numeric checks failed");
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
