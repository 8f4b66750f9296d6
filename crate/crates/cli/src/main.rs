use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eqfree_core::commands;
use eqfree_core::config::RunConfig;
use eqfree_core::Error;

#[derive(Parser)]
#[command(name = "eqfree", version, about = "Equation-free UQ for a stochastic surface reaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble of SSA runs at a single beta
    Ssa(Common),
    /// Coarse projective integration of the chaos coefficients
    Cpi(Common),
    /// Newton-Krylov fixed point of the coarse time-stepper
    FixedPoint(Common),
    /// Pseudo-arclength continuation in the mean of beta
    Continuation(Common),
    /// Mean-field reference trajectory on the CPI record schedule
    Reference(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every field is optional
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the file
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core), overriding the file
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

type CommandFn = fn(&RunConfig, &std::path::Path) -> eqfree_core::Result<Vec<PathBuf>>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let (common, cmd): (&Common, CommandFn) = match &cli.command {
            Command::Ssa(c) => (c, commands::cmd_ssa),
            Command::Cpi(c) => (c, commands::cmd_cpi),
            Command::FixedPoint(c) => (c, commands::cmd_fixed_point),
            Command::Continuation(c) => (c, commands::cmd_continuation),
            Command::Reference(c) => (c, commands::cmd_reference),
        };
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| cmd(&cfg, &common.out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
