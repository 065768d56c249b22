//! `mlspline`: simulate, enrich, verify and compare from the command line.
//!
//! Exit status is 0 on success, 1 when data, a solver or the optimality
//! check rejects the input, and 2 for I/O or configuration problems.

mod commands;
mod failure;
mod preset;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CompareArgs, EnrichArgs, SimulateArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "mlspline", version, about = "Maximum-likelihood continuous-time state estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and noisy measurements from a JSON config.
    Simulate(SimulateArgs),
    /// Fit the optimal spline to measurements.
    Enrich(EnrichArgs),
    /// Check a spline against the optimality conditions.
    Verify(VerifyArgs),
    /// Score estimators against a true trajectory.
    Compare(CompareArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Enrich(a) => commands::cmd_enrich(a),
        Command::Verify(a) => commands::cmd_verify(a),
        Command::Compare(a) => commands::cmd_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
