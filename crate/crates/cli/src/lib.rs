//! Command-line front end: configs, presets, run directories and commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Env;
use crate::config::{load_config, presets, CommandConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fairshift", version, about = "Fair few-shot meta-learning and fairness shift warnings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named built-in config (see `fairshift presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Directory relative data paths resolve against.
    #[arg(long, env = "FAIRSHIFT_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Overrides the model file the config reads.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier on one dataset.
    Fit(RunArgs),
    /// Meta-train on a task distribution.
    Train(RunArgs),
    /// Train the non-meta baseline on a task distribution.
    Pretrain(RunArgs),
    /// Fine-tune a model on a few rows and compare before/after.
    Finetune(RunArgs),
    /// Train and evaluate over a grid of regularization strengths.
    Sweep(RunArgs),
    /// Evaluate a model on a dataset.
    Eval(RunArgs),
    /// Simulate shifts, fit a warning scorecard and report its quality.
    Warn(RunArgs),
    /// Score an external classifier's warnings against a warning set.
    ScoreWarnings(RunArgs),
    /// List presets, or print one.
    Presets {
        name: Option<String>,
    },
}

fn prepare<T: CommandConfig>(args: &RunArgs, expected: &str) -> CliResult<(Env, T)> {
    let mut cfg: T = load_config(args.config.as_deref(), args.preset.as_deref(), expected)?;
    if let Some(seed) = args.seed {
        *cfg.seed_mut() = seed;
    }
    if let Some(model) = &args.model {
        match cfg.model_mut() {
            Some(slot) => *slot = model.clone(),
            None => return Err(CliError::config(format!("'{expected}' takes no --model"))),
        }
    }
    let env = Env {
        out: args.out.clone(),
        data_dir: args.data_dir.clone(),
    };
    Ok((env, cfg))
}

/// What a successful invocation produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    RunDir(PathBuf),
    Text(String),
}

pub fn execute(cli: Cli) -> CliResult<Outcome> {
    use commands::*;
    let dir = match cli.command {
        Command::Fit(a) => {
            let (env, cfg) = prepare(&a, "fit")?;
            run_fit(&env, &cfg)?
        }
        Command::Train(a) => {
            let (env, cfg) = prepare(&a, "train")?;
            run_train(&env, &cfg)?
        }
        Command::Pretrain(a) => {
            let (env, mut cfg): (_, config::TrainCommand) = prepare(&a, "pretrain")?;
            cfg.trainer = "pretrain".into();
            run_train(&env, &cfg)?
        }
        Command::Finetune(a) => {
            let (env, cfg) = prepare(&a, "finetune")?;
            run_finetune(&env, &cfg)?
        }
        Command::Sweep(a) => {
            let (env, cfg) = prepare(&a, "sweep")?;
            run_sweep(&env, &cfg)?
        }
        Command::Eval(a) => {
            let (env, cfg) = prepare(&a, "eval")?;
            run_eval(&env, &cfg)?
        }
        Command::Warn(a) => {
            let (env, cfg) = prepare(&a, "warn")?;
            run_warn(&env, &cfg)?
        }
        Command::ScoreWarnings(a) => {
            let (env, cfg) = prepare(&a, "score-warnings")?;
            run_score_warnings(&env, &cfg)?
        }
        Command::Presets { name: None } => {
            return Ok(Outcome::Text(presets().names().join("\n")));
        }
        Command::Presets { name: Some(n) } => {
            let text = presets().get(&n).map_err(|e| CliError::config(e.to_string()))?;
            return Ok(Outcome::Text(text.trim_end().to_string()));
        }
    };
    Ok(Outcome::RunDir(dir))
}

/// Parses `args` (including the program name) and runs the command.
/// Usage errors map to exit code 2.
pub fn run_args<I, T>(args: I) -> CliResult<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::config(e.to_string()))?;
    execute(cli)
}
