//! Command-line front end: `multiphase <solve|optimize|verify|monotonicity> CONFIG`.

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::CliError;
use crate::output::Output;

/// Environment variable overriding the configured output directory.
const OUTPUT_DIR_ENV: &str = "MULTIPHASE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "multiphase", version, about = "Multiphase shape optimization and free-boundary diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Torsion and/or eigenvalue solves on a fixed support.
    Solve(Args),
    /// Penalized multiphase optimization.
    Optimize(Args),
    /// Theory checks on a previous `optimize` output.
    Verify(Args),
    /// Monotonicity-formula profiles of analytic or file-based fields.
    Monotonicity(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration file.
    config: PathBuf,
    /// Output directory; overrides the configuration and the environment.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (name, args, run): (&str, Args, fn(Context) -> Result<(), CliError>) = match command {
        Command::Solve(a) => ("solve", a, commands::solve::run),
        Command::Optimize(a) => ("optimize", a, commands::optimize::run),
        Command::Verify(a) => ("verify", a, commands::verify::run),
        Command::Monotonicity(a) => ("monotonicity", a, commands::monotonicity::run),
    };
    let config = config::load(&args.config)?;
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = args
        .output_dir
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.as_ref().map(|d| commands::resolve(&base_dir, d)))
        .unwrap_or_else(|| PathBuf::from(format!("{name}_out")));
    let out = Output::create(&dir, &config)?;
    log::info!("{name}: writing to {}", dir.display());
    run(Context {
        config,
        config_path: args.config,
        base_dir,
        out,
    })
}
