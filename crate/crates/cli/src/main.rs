//! Command-line runner: pricing, simulation, verification and equivalence
//! comparisons driven by a JSON configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunError;

#[derive(Parser)]
#[command(
    name = "fundlab",
    about = "Prices and hedges OTC contracts under funding, netting and collateral conventions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to $FUNDLAB_OUT, then the working
    /// directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override numerics.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override numerics.paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the pricing equation and export the value and hedge surfaces.
    Price(CommonArgs),
    /// Simulate hedged ledgers along seeded paths.
    Simulate(CommonArgs),
    /// Run the martingale checks and the no-arbitrage gate.
    Verify(CommonArgs),
    /// Emit the equivalence reports (discount routes, measure switch,
    /// convention degenerations).
    Compare(CommonArgs),
}

fn resolve_run(args: &CommonArgs) -> Result<(config::ResolvedRun, PathBuf), RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut parsed: config::RunConfig = serde_json::from_str(&text)
        .map_err(|e| RunError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(steps) = args.steps {
        parsed.numerics.steps = steps;
    }
    if let Some(paths) = args.paths {
        parsed.numerics.paths = paths;
    }
    if let Some(seed) = args.seed {
        parsed.numerics.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| parsed.output.directory.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os("FUNDLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let resolved = config::resolve(parsed).map_err(|e| RunError::Config(e.0))?;
    Ok((resolved, out_dir))
}

fn dispatch(command: &Command) -> Result<(), RunError> {
    match command {
        Command::Price(args) => {
            let (run, out) = resolve_run(args)?;
            commands::price(&run, &out)
        }
        Command::Simulate(args) => {
            let (run, out) = resolve_run(args)?;
            commands::simulate(&run, &out)
        }
        Command::Verify(args) => {
            let (run, out) = resolve_run(args)?;
            commands::verify(&run, &out)
        }
        Command::Compare(args) => {
            let (run, out) = resolve_run(args)?;
            commands::compare(&run, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
