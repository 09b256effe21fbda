use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod energy_csv;

use commands::Failure;
use viscobeam::config::RunConfig;

/// Timoshenko beam with infinite memory: kernel checks, envelopes, simulation and decay fits.
#[derive(Parser)]
#[command(name = "viscobeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Admissibility of the configured kernel against the beam
    CheckKernel { config: PathBuf },
    /// Compare a run's energy with the calibrated decay envelope
    Envelope {
        config: PathBuf,
        /// energy CSV; defaults to output.path
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the simulation and write the energy CSV
    Simulate { config: PathBuf },
    /// Fit the late-time decay exponent of a run
    FitDecay {
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Observed time and space orders over (N, 2N, 4N) × (dt, dt/2, dt/4)
    Convergence { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = run(cli.command, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::CheckKernel { config } => commands::check_kernel(&RunConfig::load(&config)?, out),
        Command::Envelope { config, csv } => commands::envelope(&RunConfig::load(&config)?, csv, out),
        Command::Simulate { config } => commands::simulate(&RunConfig::load(&config)?, out),
        Command::FitDecay { config, csv } => commands::fit_decay(&RunConfig::load(&config)?, csv, out),
        Command::Convergence { config } => commands::convergence(&RunConfig::load(&config)?, out),
    }
}
