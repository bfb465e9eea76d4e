mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streambal_core::WorkloadSpec;

use config::Overrides;
use error::CliResult;

/// Stream partitioning simulator.
#[derive(Parser)]
#[command(name = "streambal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics, logs and a manifest.
    Simulate(RunArgs),
    /// Run every point of a parameter grid into one CSV.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON object of lists: strategy, n, epsilon, alpha, z, seed.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Write a synthetic Zipf workload as a trace file.
    GenTrace(GenTraceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    log_routing: bool,
    #[arg(long)]
    log_migrations: bool,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    keys: Option<u64>,
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    messages: Option<u64>,
    /// Trace file to write.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<config::FileConfig> {
        let overrides = Overrides {
            seed: self.seed,
            strategy: self.strategy.as_deref().map(str::parse).transpose()?,
            out: self.out.clone(),
            format: self.format.as_deref().map(str::parse).transpose()?,
            log_routing: self.log_routing,
            log_migrations: self.log_migrations,
        };
        config::load(self.config.as_deref())?.resolve(&overrides)
    }
}

fn gen_trace(args: &GenTraceArgs) -> CliResult<()> {
    let mut file = config::load(args.config.as_deref())?;
    if let WorkloadSpec::Zipf {
        distinct_keys,
        zipf_exponent,
        message_count,
        ..
    } = &mut file.workload
    {
        *distinct_keys = args.keys.unwrap_or(*distinct_keys);
        *zipf_exponent = args.exponent.unwrap_or(*zipf_exponent);
        *message_count = args.messages.unwrap_or(*message_count);
    }
    let overrides = Overrides {
        seed: args.seed,
        ..Overrides::default()
    };
    commands::gen_trace(file.resolve(&overrides)?, &args.out)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(args.resolve()?),
        Command::Sweep { run, grid } => {
            let grid = commands::Grid::load(&grid)?;
            commands::sweep(run.resolve()?, &grid)
        }
        Command::GenTrace(args) => gen_trace(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
