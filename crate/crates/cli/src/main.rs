//! `koopman`: fit, inspect and apply Koopman models from snapshot CSV files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use koopman_core::KoopmanError;

#[derive(Parser, Debug)]
#[command(name = "koopman", version, about = "Koopman operator estimation from snapshot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate snapshot CSV from a reference system.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Steps per trajectory (overrides the config).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fit a model and write it as JSON.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Snapshot CSV (overrides the config).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model output path (overrides the config).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Predict outputs along a trajectory; CSV `k,y1..yp` on stdout.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 0)]
        steps: u32,
    },
    /// Spectrum as CSV `index,re,im,modulus,angle`.
    Eig {
        #[arg(long)]
        model: PathBuf,
        /// Append the magnitude of each mode for every output.
        #[arg(long)]
        modes: bool,
    },
    /// Diagnostics of a model on a snapshot CSV.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(KoopmanError),
}

impl From<KoopmanError> for CliError {
    fn from(e: KoopmanError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn report(&self) {
        match self {
            CliError::Usage(msg) => eprintln!("error: {msg}"),
            CliError::Core(e) => {
                eprintln!("error: {e}");
                if let KoopmanError::SingularSystem(_) = e {
                    eprintln!("hint: switch to the pseudoinverse regularizer or raise beta");
                }
            }
        }
    }
}

fn init_logging() {
    let level = match std::env::var("KOOPMAN_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, steps } => commands::simulate(&config, steps),
        Command::Fit { config, input, model, json } => commands::fit(config.as_deref(), input, model, json),
        Command::Predict { model, x0, steps } => commands::predict(&model, &x0, steps),
        Command::Eig { model, modes } => commands::eig(&model, modes),
        Command::Diagnose { model, input, json } => commands::diagnose(&model, &input, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
