//! `duet`: train, build preference pairs, evaluate and analyze mixed
//! text/speech policies on the synthetic task.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod analyze;
mod error;
mod io;
mod pairs;
mod setup;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use duet::config::ExperimentConfig;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "duet", version, about = "Modality-aware hybrid post-training on a synthetic text/speech task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration source shared by every subcommand that needs one.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML experiment config; omitted sections and keys take their defaults.
    #[arg(long, short = 'c', value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `train.steps=10`. Repeatable; applied
    /// in order after the file.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one training recipe and write a run directory.
    Train(train::TrainArgs),
    /// Sample candidates per prompt, judge them and emit preference pairs.
    BuildPairs(pairs::BuildPairsArgs),
    /// Greedy, noise-free evaluation of a checkpoint (or the base policy).
    Eval(EvalArgs),
    /// Analysis reports over checkpoints or score files.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
    /// Print the fully resolved configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Policy checkpoint; defaults to the base policy built from the config.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

fn default_config_help() -> String {
    format!(
        "Default configuration (every key can be set in the config file or with --set):\n\n{}",
        ExperimentConfig::default().to_toml()
    )
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train::run(args),
        Command::BuildPairs(args) => pairs::run(args),
        Command::Eval(args) => {
            let cfg = setup::load_config(&args.config)?;
            let task = setup::task(&cfg)?;
            let policy = setup::policy(&cfg, &task, args.checkpoint.as_deref())?;
            let metrics = duet::trainer::evaluate_policy(
                &policy,
                &task,
                &duet::trainer::all_prompts(&task),
                &cfg.judge,
            )
            .map_err(CliError::runtime)?;
            io::print_json(&metrics)
        }
        Command::Analyze(cmd) => analyze::run(cmd),
        Command::Config(args) => {
            let cfg = setup::load_config(&args)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let help = default_config_help();
    let mut command = Cli::command();
    for name in ["train", "build-pairs", "eval", "config"] {
        command = command.mut_subcommand(name, |c| c.after_long_help(help.clone()));
    }
    let matches = match command.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
