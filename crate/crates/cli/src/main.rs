// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;
mod instance;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;

use args::{Cli, Command};
use config::{Mode, RunConfig};
use output::RunDir;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn resolve(cli: &Cli) -> Result<(Mode, RunConfig)> {
    if let Command::Replay(r) = &cli.command {
        if cli.config.is_some() {
            bail!("replay takes its configuration from the manifest; drop --config");
        }
        let mut config = RunConfig::load(&r.manifest)?;
        let Some(mode) = config.mode else {
            bail!("{} has no `mode` field; it is not a run manifest", r.manifest.display());
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        return Ok((mode, config));
    }
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mode = match &cli.command {
        Command::Solve(a) => {
            a.apply(&mut config);
            Mode::Solve
        }
        Command::LrTest(a) => {
            a.apply(&mut config);
            Mode::LrTest
        }
        Command::Pretrain(a) => {
            a.apply(&mut config);
            Mode::Pretrain
        }
        Command::Finetune(a) => {
            a.apply(&mut config);
            Mode::Finetune
        }
        Command::TuneCmaes(a) => {
            a.apply(&mut config);
            Mode::TuneCmaes
        }
        Command::Bench(a) => {
            a.apply(&mut config);
            Mode::Bench
        }
        Command::Report(a) => {
            if !a.runs.is_empty() {
                config.report.runs = a.runs.clone();
            }
            Mode::Report
        }
        Command::Replay(_) => unreachable!("handled above"),
    };
    Ok((mode, config))
}

fn run(cli: Cli) -> Result<()> {
    let (mode, config) = resolve(&cli)?;
    let dir: PathBuf = cli
        .run_dir
        .clone()
        .unwrap_or_else(|| cli.output_root.join(format!("{}-s{}", mode.name(), config.seed)));
    let dir = RunDir::create(dir)?;
    let text = commands::run(mode, config, &dir)?;
    print!("{text}");
    println!("artifacts in {}", dir.path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
