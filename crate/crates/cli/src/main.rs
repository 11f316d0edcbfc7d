//! `copula-bounds`: seed-pinned batch runs writing CSV tables.
//!
//! Exit codes: 0 success, 2 invalid arguments or configuration, 3 failure
//! during computation.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, CommonArgs};
use config::{apply_overrides, read_config_file, RawConfig, RunConfig, Subcommand};

fn resolve(
    command: Subcommand,
    common: &CommonArgs,
    mut extra: Vec<(&'static str, String)>,
) -> anyhow::Result<RunConfig> {
    let mut raw = match &common.config {
        Some(path) => read_config_file(path, command)?,
        None => RawConfig::new(),
    };
    let mut flags = common.overrides();
    flags.append(&mut extra);
    apply_overrides(&mut raw, command, flags)?;
    Ok(RunConfig::resolve(command, &raw)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.command {
        Command::Bounds {
            common,
            differences,
        } => {
            let extra = if *differences {
                vec![("differences", "true".to_string())]
            } else {
                vec![]
            };
            resolve(Subcommand::Bounds, common, extra)?
        }
        Command::Symmetry { common } => resolve(Subcommand::Symmetry, common, vec![])?,
        Command::Lan { common } => resolve(Subcommand::Lan, common, vec![])?,
        Command::Quadconv { common } => resolve(Subcommand::Quadconv, common, vec![])?,
        Command::Estimate { common } => resolve(Subcommand::Estimate, common, vec![])?,
    };
    if let Some(threads) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    commands::run(&config)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<copula_bounds::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
