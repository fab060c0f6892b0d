// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! The `sentiflow` command line: argument definitions and the command
//! implementations behind them.

pub mod cli;
pub mod commands;
pub mod serve;
pub mod services;

use std::process::ExitCode;

use cli::{Cli, Command};
use sentiflow_core::clock;

/// Exit code for internal failures.
pub const EXIT_INTERNAL: u8 = 1;
/// Exit code for bad arguments or inputs.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = services::load_config(cli.config.as_deref()).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    match cli.command {
        Command::Serve(args) => {
            serve::serve(config, &args, clock::system(), serve::termination(), |_| {})?;
        }
        Command::Replay(args) => {
            commands::replay(config, &args)?;
        }
        Command::Generate(args) => {
            commands::generate(&args)?;
        }
        Command::TrainModel(args) => {
            commands::train_model(&args)?;
        }
        Command::Classify(args) => commands::classify(&config, &args)?,
        Command::Query(args) => commands::query(&config, &args)?,
        Command::Export(args) => {
            commands::export(&config, &args)?;
        }
        Command::BenchIngest(args) => commands::bench_ingest_cmd(&args)?,
        Command::BenchPipeline(args) => {
            commands::bench_pipeline_cmd(&config, &args)?;
        }
        Command::BenchAggregate(args) => commands::bench_aggregate_cmd(&args)?,
        Command::Config => print!("{}", config.to_toml()),
    }
    Ok(())
}
