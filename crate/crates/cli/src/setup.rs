use std::path::Path;

use anyhow::anyhow;
use duet::config::ExperimentConfig;
use duet::judge::TaskSpec;
use duet::seqmodel::{checkpoint, PolicyParams};
use duet::trainer::base_policy;

use crate::error::CliError;
use crate::io;
use crate::ConfigArgs;

pub fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let base = match &args.config {
        Some(path) => {
            let text = io::read_to_string(path, "config file")?;
            ExperimentConfig::from_toml(&text)
                .map_err(|e| CliError::usage(anyhow!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn task(cfg: &ExperimentConfig) -> Result<TaskSpec, CliError> {
    Ok(TaskSpec::generate(&cfg.model, &cfg.task)?)
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams, CliError> {
    if !path.exists() {
        return Err(CliError::usage(anyhow!("checkpoint `{}` does not exist", path.display())));
    }
    checkpoint::load(path).map_err(|e| CliError::from(e).context(format!("loading `{}`", path.display())))
}

/// The checkpoint at `path`, or the base policy the config describes.
pub fn policy(cfg: &ExperimentConfig, task: &TaskSpec, path: Option<&Path>) -> Result<PolicyParams, CliError> {
    match path {
        Some(p) => {
            let params = load_checkpoint(p)?;
            if params.config.text_vocab != task.vocab.text_size
                || params.config.speech_vocab != task.vocab.speech_size
            {
                return Err(CliError::usage(anyhow!(
                    "checkpoint `{}` has a different vocabulary than the configured task",
                    p.display()
                )));
            }
            Ok(params)
        }
        None => base_policy(cfg, task).map_err(CliError::from),
    }
}
