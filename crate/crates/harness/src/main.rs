use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fpf_harness::commands;
use fpf_harness::config::{load_config, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "fpf",
    version,
    about = "Filtering experiments for 1-D diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a truth path and its observations.
    Simulate(Common),
    /// Run every configured filter and write one trace per filter.
    Run(Common),
    /// Seed-averaged errors against the reference filter, with rate fits.
    Convergence(Common),
    /// Aggregate error tables into a comparison table.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the first replica seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

type Runner = fn(&ExperimentSpec, &std::path::Path) -> anyhow::Result<Vec<PathBuf>>;

fn execute(args: Common, run: Runner) -> anyhow::Result<()> {
    let mut spec = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            anyhow::bail!("--threads must be positive");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the thread pool")?;
    let written = pool.install(|| run(&spec, &args.out))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (Common, Runner) = match cli.command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Run(a) => (a, commands::run),
        Command::Convergence(a) => (a, commands::convergence),
        Command::Report(a) => (a, commands::report),
    };
    match execute(args, run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
