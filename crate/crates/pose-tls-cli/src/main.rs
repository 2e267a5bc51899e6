use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pose_tls_cli::commands::{cmd_estimate, cmd_montecarlo, cmd_simulate};
use pose_tls_cli::validate::cmd_validate;

/// Rigid pose estimation from matched vector observations: simulate noisy
/// measurement sets, estimate poses with full error covariances, run
/// Monte-Carlo covariance validation, and self-check the analytic
/// machinery.
#[derive(Parser)]
#[command(name = "pose-tls", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one noisy measurement set from a scenario
    Simulate {
        /// Scenario JSON file, or "paper" for the built-in reference scenario
        #[arg(long)]
        scenario: String,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output measurement JSON path (manifest written alongside)
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the pose from a measurement file, with full covariances
    Estimate {
        /// Measurement JSON file
        #[arg(long)]
        measurements: PathBuf,
        /// Solver configuration JSON file (library defaults if omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output report JSON path (manifest written alongside)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded Monte-Carlo study of the analytic covariances
    Montecarlo {
        /// Scenario JSON file, or "paper" for the built-in reference scenario
        #[arg(long)]
        scenario: String,
        /// Number of trials
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// RNG seed (trial t draws from stream t of this seed)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solver configuration JSON file (library defaults if omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-check the analytic covariances against independent references
    Validate {
        /// Offset applied to every internal scenario seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fim_sign_error: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            scenario,
            seed,
            out,
        } => cmd_simulate(&scenario, seed, &out),
        Command::Estimate {
            measurements,
            config,
            out,
        } => cmd_estimate(&measurements, config.as_deref(), &out),
        Command::Montecarlo {
            scenario,
            trials,
            seed,
            config,
            out,
        } => cmd_montecarlo(&scenario, trials, seed, config.as_deref(), &out),
        Command::Validate {
            seed,
            inject_fim_sign_error,
        } => cmd_validate(seed, inject_fim_sign_error),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
