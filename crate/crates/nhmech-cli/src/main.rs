//! `nhmech`: simulations, Hamilton-Jacobi checks and reduction pipelines on the built-in systems.
//!
//! Exit codes: 0 pass, 1 check failed, 2 bad request, 3 numerical failure.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CommonArgs;

#[derive(Parser, Debug)]
#[command(name = "nhmech", version, about = "Nonholonomic mechanics: simulate, check, reduce")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the constrained equations of motion and write the trajectory as CSV
    Simulate(SimulateArgs),
    /// Run one named check and write its JSON report
    Check(CheckArgs),
    /// Reduce, check the reduced Hamilton-Jacobi equation, reconstruct and check relatedness
    Reduce(ReduceArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Initial configuration, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<String>,
    /// Initial velocity, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Skip the velocity projection back onto the constraints after each step
    #[arg(long)]
    pub no_stabilize: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// in_N, closedness, hj_weak, hj_strong, related, forced, hamiltonian, reduced,
    /// horizontal_mu, classify, chow, noether or bates
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub candidate: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub c1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c2: Option<f64>,
    /// Bracket depth for chow
    #[arg(long)]
    pub depth: Option<usize>,
    /// Number of grid points (or sampled states)
    #[arg(long)]
    pub grid_count: Option<usize>,
    /// Grid box lower corner, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<String>,
    /// Momentum value for horizontal_mu, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// Sign of the force term for forced: minus or plus
    #[arg(long)]
    pub sign: Option<String>,
    /// Strong form of the Hamiltonian check
    #[arg(long)]
    pub strong: bool,
    /// Reduced equation variant: chaplygin, pure_kinematic or general
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub candidate: Option<String>,
    #[arg(long)]
    pub grid_count: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Check(a) => commands::check(a),
        Command::Reduce(a) => commands::reduce(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("nhmech: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
