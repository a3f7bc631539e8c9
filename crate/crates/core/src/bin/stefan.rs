use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use stefan_core::runner::{run, Command, RunManifest, EXIT_CONFIG};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Solve the integral equation and reconstruct requested snapshots.
    Solve,
    /// Tabulate the exact traveling front.
    Oracle,
    /// Contraction constants, certified window and empirical contraction.
    Certify,
    /// Front-fixing finite-difference reference run.
    Fd,
    /// Compare two trajectories (or the two solvers).
    Compare,
    /// Step-size refinement study.
    Convergence,
}

/// Volterra integral-equation solver for the one-phase Stefan problem.
#[derive(Debug, Parser)]
#[command(name = "stefan", version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for the randomized contraction test.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let command = match args.command {
        Cmd::Solve => Command::Solve,
        Cmd::Oracle => Command::Oracle,
        Cmd::Certify => Command::Certify,
        Cmd::Fd => Command::Fd,
        Cmd::Compare => Command::Compare,
        Cmd::Convergence => Command::Convergence,
    };
    let manifest = RunManifest {
        command,
        config_path: args.config,
        output_dir: args.out,
        seed: args.seed,
    };
    ExitCode::from(run(&manifest) as u8)
}
