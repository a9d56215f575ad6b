//! surfclass: surface-defect classification experiments from the shell.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "surfclass",
    about = "Surface-defect CNNs: data generation, dataset prep, training, evaluation and benchmarks",
    version
)]
struct Cli {
    /// Run configuration file (key = value lines; unknown keys rejected).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 = deterministic single-threaded mode.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic defect/non-defect corpus with its manifest.
    Datagen,
    /// Aggregate, cleanse and balance image sources into a manifest.
    Prep,
    /// Train a network; writes checkpoints and CSV learning curves.
    Train,
    /// Evaluate a checkpoint on a manifest split.
    Eval,
    /// Stratified k-fold cross-validation.
    Crossval,
    /// Single-image inference latency benchmark.
    Bench,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--config <file> is required"))?;
    let mut cfg = RunConfig::load(config_path)?;
    cfg.apply_overrides(cli.seed, cli.out.as_deref(), cli.threads);

    // threads = 0 keeps every kernel on one worker; kernel reductions are
    // ordered either way, so outputs do not depend on this number.
    let threads = cfg.threads()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(if threads == 0 { 1 } else { threads })
        .build_global()
        .ok();

    match cli.command {
        Command::Datagen => commands::cmd_datagen(&cfg),
        Command::Prep => commands::cmd_prep(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::Crossval => commands::cmd_crossval(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single-line, machine-parsable failure report.
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
