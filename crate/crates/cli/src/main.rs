mod commands;
mod files;
mod pipeline;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// LOB event modelling, neural Hawkes simulation and market-making experiments.
#[derive(Debug, Parser)]
#[command(name = "lobhawk", version)]
struct Cli {
    /// Base seed; every command is deterministic given it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify a LOBSTER message/orderbook pair into a canonical event stream.
    Ingest(commands::IngestArgs),
    /// Simulate a classical multivariate Hawkes process from a JSON model.
    HawkesSim(commands::HawkesSimArgs),
    /// Train the neural Hawkes model on an event stream.
    Train(commands::TrainArgs),
    /// Simulate event streams from a trained model.
    Simulate(commands::SimulateArgs),
    /// Build a midprice path from an event stream and a jump distribution.
    Price(commands::PriceArgs),
    /// Stylized statistics of a price path.
    Stats(commands::StatsArgs),
    /// Train a market-making agent on a price path.
    MmTrain(commands::MmTrainArgs),
    /// Evaluate a trained market-making agent.
    MmEval(commands::MmEvalArgs),
    /// Tables and plots from a pipeline run directory.
    Report(commands::ReportArgs),
    /// Run every stage for every asset from one config file.
    Pipeline(PipelineArgs),
    /// Write a synthetic LOBSTER pair with a known composition.
    Fixture(commands::FixtureArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root; falls back to the config value.
    #[arg(long, env = "LOBHAWK_OUTPUT")]
    out: Option<PathBuf>,
    #[command(flatten)]
    mm: commands::MmOverrides,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { lobhawk::Exec::Sequential } else { lobhawk::Exec::Parallel };
    let seed = cli.seed;
    let s = seed.unwrap_or(0);
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::HawkesSim(a) => commands::hawkes_sim(a, s),
        Command::Train(a) => commands::train(a, s, exec),
        Command::Simulate(a) => commands::simulate(a, s, exec),
        Command::Price(a) => commands::price(a, s),
        Command::Stats(a) => commands::stats(a),
        Command::MmTrain(a) => commands::mm_train(a, s),
        Command::MmEval(a) => commands::mm_eval(a, seed, exec),
        Command::Report(a) => commands::report(a),
        Command::Pipeline(a) => pipeline::run(&a.config, a.out, seed, &a.mm, exec).map(|_| ()),
        Command::Fixture(a) => commands::fixture(a, s),
    }
}
