use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taskalloc::allocation::DEFAULT_ENUM_CAP;
use taskalloc::qp::QpSettings;
use taskalloc_cli::commands;

/// Constraint-driven task allocation simulator for heterogeneous robot
/// teams. Set RUST_LOG (e.g. RUST_LOG=info) to control log verbosity.
#[derive(Parser)]
#[command(name = "taskalloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, summary.json and
    /// prop1_report.json. Exits 0 on success, 2 when an execution-guarantee
    /// monitor tripped, 1 on failure.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Tolerance of the execution-guarantee monitors.
        #[arg(long, default_value_t = 1e-6)]
        prop1_tol: f64,
    },
    /// Simulate to a snapshot, solve the relaxed QP and the exact
    /// enumeration oracle there, and report both objectives and their gap.
    /// Exits 0 when the relaxation bound holds, 2 when it does not.
    OracleCompare {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Snapshot time in seconds.
        #[arg(long)]
        time: f64,
        /// Abort if the assignment count exceeds this cap.
        #[arg(long, default_value_t = DEFAULT_ENUM_CAP)]
        enum_cap: usize,
    },
    /// Parse a scenario, report the team's capability set, and warn about
    /// demand no robot can serve.
    Validate {
        /// Scenario file (TOML).
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let settings = QpSettings::default();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            prop1_tol,
        } => commands::cmd_run(scenario, out, *prop1_tol, &settings),
        Command::OracleCompare {
            scenario,
            time,
            enum_cap,
        } => commands::cmd_oracle_compare(scenario, *time, *enum_cap, &settings),
        Command::Validate { scenario } => commands::cmd_validate(scenario),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
