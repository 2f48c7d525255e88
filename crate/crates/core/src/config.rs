//! Experiment configuration: one TOML document with a section per module.
//!
//! Unknown keys are rejected at every level. Every field has a default, so
//! an empty document is a valid configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::GateConfig;
use crate::judge::{JudgeConfig, TaskConfig};
use crate::objectives::{DpoConfig, GrpoConfig};
use crate::seqmodel::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectivesConfig {
    pub grpo: GrpoConfig,
    pub dpo: DpoConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub objectives: ObjectivesConfig,
    pub gate: GateConfig,
    pub judge: JudgeConfig,
    pub train: TrainConfig,
    pub task: TaskConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.objectives.grpo.validate()?;
        self.objectives.dpo.validate()?;
        self.gate.validate()?;
        self.judge.validate()?;
        self.train.validate()?;
        self.task.validate(&self.model)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("own output parses");
        for raw in overrides {
            let raw = raw.as_ref();
            let (path, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
            let value = parse_value(value.trim());
            let keys: Vec<&str> = path.trim().split('.').collect();
            if keys.iter().any(|k| k.is_empty()) {
                return Err(Error::Config(format!("bad override key `{path}`")));
            }
            let (last, parents) = keys.split_last().expect("nonempty");
            let mut table = &mut doc;
            for (depth, k) in parents.iter().enumerate() {
                table = table
                    .get_mut(*k)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| {
                        Error::Config(format!("unknown key `{}`", keys[..=depth].join(".")))
                    })?;
            }
            if !table.contains_key(*last) {
                return Err(Error::Config(format!("unknown key `{}`", path.trim())));
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&doc).expect("table serializes");
        Self::from_toml(&text)
    }
}

fn parse_value(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}
