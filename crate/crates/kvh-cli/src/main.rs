//! kvh: spectra, eigenfunction tables, phase-space propagation runs, and
//! density diagnostics for 1D semiclassical wave transport.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure (quantizer, caustic, domain, or boundary trouble).

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn numerical(err: impl std::fmt::Display) -> Self {
        CliError::Numerical(err.to_string())
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "kvh",
    version,
    about = "Semiclassical wave transport on 1D phase space",
    after_help = "Initial-state specs: gaussian:xbar,pbar,sigma_x,sigma_p | eigen_ridge:n,k | file:path"
)]
struct Cli {
    #[command(flatten)]
    overrides: config::Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semiclassical levels E(J_n), optionally with classical-mode lines
    Spectrum {
        /// Highest quantum number
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        /// Append the classical frequency ladder on each quantized torus
        #[arg(long)]
        include_classical: bool,
        /// Classical-mode index interval lo:hi
        #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
        nu_range: String,
    },
    /// Tabulate one eigenfunction in configuration or phase space
    Eigenfunction {
        /// Quantum number
        #[arg(long)]
        n: usize,
        /// config | phase
        #[arg(long, default_value = "config")]
        space: String,
    },
    /// Evolve an initial phase-space wave and write the evolved grid
    Propagate {
        /// scalar | lve | kvn | kvh-ps | kvh-sc
        #[arg(long)]
        kind: String,
        /// Target time
        #[arg(long)]
        t: f64,
        /// Initial state spec (see --help footer)
        #[arg(long)]
        initial: String,
    },
    /// Integrate a stored phase-space grid over momentum
    Project {
        /// Grid file written by propagate (.bin or .json)
        #[arg(long)]
        input: PathBuf,
    },
    /// Physical-density report f = |psi|^2 + corrections for an initial wave
    DensityCheck {
        /// Initial state spec (see --help footer)
        #[arg(long)]
        initial: String,
    },
    /// Compare a harmonic eigenfunction against the exact quantum one
    Compare {
        /// Quantum number
        #[arg(long)]
        n: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    match &cli.command {
        Command::Spectrum { n_max, include_classical, nu_range } => {
            commands::cmd_spectrum(&cfg, *n_max, *include_classical, nu_range)
        }
        Command::Eigenfunction { n, space } => commands::cmd_eigenfunction(&cfg, *n, space),
        Command::Propagate { kind, t, initial } => {
            commands::cmd_propagate(&cfg, kind, *t, initial)
        }
        Command::Project { input } => commands::cmd_project(&cfg, input),
        Command::DensityCheck { initial } => commands::cmd_density_check(&cfg, initial),
        Command::Compare { n } => commands::cmd_compare(&cfg, *n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
