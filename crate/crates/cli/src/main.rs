use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use punctual::cli_io::{dispatch, error_json, exit_code, parse_scenario, Command, RunOptions};
use punctual::Error;

#[derive(Parser)]
#[command(name = "punctual", version, about = "Singular adaptive-dynamics diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Drift, correction drift and diffusion matrix over a grid (CSV).
    CoeffTable(Common),
    /// Reachability verdict per singularity (JSON lines).
    Classify(Common),
    /// Euler–Maruyama paths with absorption and stop rules.
    Simulate(Common),
    /// Minimum-action path between two points.
    Quasipotential(Common),
    /// Minimal quasi-potential over the boundary of a domain.
    ExitCost(Common),
    /// Monte Carlo exit times and locations across noise levels.
    ExitExperiment(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "PUNCTUAL_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cmd: Command, args: &Common) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let scenario = parse_scenario(&text)?;
    let opts = RunOptions { workers: args.workers, seed: args.seed, out: args.out.clone() };
    let manifest = dispatch(cmd, &scenario, &opts)?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.cmd {
        Cmd::CoeffTable(a) => (Command::CoeffTable, a),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Quasipotential(a) => (Command::Quasipotential, a),
        Cmd::ExitCost(a) => (Command::ExitCost, a),
        Cmd::ExitExperiment(a) => (Command::ExitExperiment, a),
    };
    match run(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
