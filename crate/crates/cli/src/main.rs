//! `limitcycle`: parameter sweeps over the renormalized inverse-square solvers,
//! emitted as CSV or JSON tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Command, CommonArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "limitcycle", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Running coupling H(Λ) over a cutoff sweep, plus the cutoffs where H = 0 and H = 1
    Rgflow(CommonArgs),
    /// β(H) over an H sweep, including the analytic extremum
    Beta(CommonArgs),
    /// Bound-state towers per cutoff with a geometric fit of each
    Spectrum(CommonArgs),
    /// On-shell amplitude, phase shift and phase-law fit over a momentum sweep
    Phase(CommonArgs),
    /// Total cross section against the unitarity limit over a momentum sweep
    Xsec(CommonArgs),
    /// Zero-energy wave function and its fitted threshold phase
    Zeroenergy(CommonArgs),
}

impl Cmd {
    fn split(self) -> (Command, CommonArgs) {
        match self {
            Cmd::Rgflow(a) => (Command::Rgflow, a),
            Cmd::Beta(a) => (Command::Beta, a),
            Cmd::Spectrum(a) => (Command::Spectrum, a),
            Cmd::Phase(a) => (Command::Phase, a),
            Cmd::Xsec(a) => (Command::Xsec, a),
            Cmd::Zeroenergy(a) => (Command::Zeroenergy, a),
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (command, args) = cli.command.split();
    let cfg = config::resolve(command, &args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let tables = pool.install(|| commands::run(command, &cfg))?;
    output::emit(command, &cfg, &tables)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("limitcycle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
