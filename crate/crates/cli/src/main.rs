use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formation_sim::commands;

#[derive(Parser)]
#[command(name = "formation-sim", version, about = "Distributed formation tracking of networked two-link manipulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV logs, a report and plots.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration step.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Check a scenario's hypotheses without running it.
    Validate { scenario: PathBuf },
    /// Run a scenario over a grid of parameter values (in parallel; the
    /// worker count comes from FORMATION_SIM_WORKERS).
    Sweep {
        scenario: PathBuf,
        /// `name=v1,v2,...`, `name=a..b` or `name=a..b:step` for alpha1,
        /// beta, dt or seed. Give one or two.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a bundled scenario (paper-fig3, corollary1-broken,
    /// corollary2-switching, single-agent).
    Demo {
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, out, seed, dt } => commands::cmd_run(&scenario, &out, seed, dt),
        Command::Validate { scenario } => commands::cmd_validate(&scenario),
        Command::Sweep { scenario, params, out } => commands::cmd_sweep(&scenario, &params, &out),
        Command::Demo { name, out, seed, dt } => commands::cmd_demo(&name, &out, seed, dt),
    };
    ExitCode::from(code as u8)
}
