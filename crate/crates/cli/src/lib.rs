//! Config-driven command-line front end: `synth`, `prep`, `train`, `predict`, `eval`.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;

use std::path::Path;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Synth,
    Prep,
    Train,
    Predict,
    Eval,
}

/// Runs `command` and returns the text report for stdout.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    Ok(match command {
        Command::Synth => commands::cmd_synth(cfg)?.to_string(),
        Command::Prep => commands::cmd_prep(cfg)?.to_string(),
        Command::Train => commands::cmd_train(cfg)?.to_string(),
        Command::Predict => commands::cmd_predict(cfg)?.to_string(),
        Command::Eval => commands::cmd_eval(cfg)?.to_string(),
    })
}

/// Loads the config and runs `command`.
pub fn run_from_path(command: Command, config: &Path) -> Result<String, CliError> {
    run(command, &RunConfig::load(config)?)
}
