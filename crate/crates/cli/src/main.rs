//! `phs-lab`: run port-Hamiltonian scenarios from INI-style config files.

mod commands;
mod config;
mod error;
mod models;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::Config;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "phs-lab", version, about = "Port-Hamiltonian energy-conversion lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the sampled trajectory as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a model under an open-loop input.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Run a four-phase Carnot cycle on a two-port model.
    Carnot {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Quadratic storage certificate for a mass-spring-damper.
    StorageLmi {
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 3.0)]
        k: f64,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        /// Random driven runs used to audit the dissipation inequality.
        #[arg(long, default_value_t = 100)]
        audit_runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled available-storage / required-supply bounds.
    StorageBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy router between two mass-spring systems.
    Router {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the unkicked (dead) state.
        #[arg(long)]
        no_kick: bool,
        #[command(flatten)]
        output: Output,
    },
    /// IDA-PBC matching checks for the actuator.
    IdaPbc {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch audits (constant-output cycles, Legendre identities, ...).
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_optional(path: Option<&Path>) -> Result<Option<Config>, CliError> {
    path.map(Config::load).transpose()
}

fn write_outputs(outcome: &Outcome, out: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    if let Some(path) = csv {
        match &outcome.csv {
            Some(data) => fs::write(path, data)?,
            None => return Err(CliError::Config("this command produces no trajectory".into())),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (outcome, out, csv) = match cli.command {
        Command::Simulate { config, output } => {
            (commands::simulate_cmd(&Config::load(&config)?)?, output.out, output.csv)
        }
        Command::Carnot { config, output } => {
            (commands::carnot_cmd(&Config::load(&config)?)?, output.out, output.csv)
        }
        Command::StorageLmi { m, k, d, audit_runs, out } => {
            (commands::storage_lmi_cmd(m, k, d, audit_runs)?, out, None)
        }
        Command::StorageBounds { config, out } => {
            (commands::storage_bounds_cmd(&Config::load(&config)?)?, out, None)
        }
        Command::Router { config, no_kick, output } => {
            let cfg = load_optional(config.as_deref())?;
            (commands::router_cmd(cfg.as_ref(), no_kick)?, output.out, output.csv)
        }
        Command::IdaPbc { config, out } => {
            let cfg = load_optional(config.as_deref())?;
            (commands::ida_pbc_cmd(cfg.as_ref())?, out, None)
        }
        Command::Audit { config, out } => (commands::audit_cmd(&Config::load(&config)?)?, out, None),
    };
    write_outputs(&outcome, out.as_deref(), csv.as_deref())?;
    match outcome.audit_failure {
        Some(reason) => Err(CliError::Audit(reason)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phs-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
