use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{MaskRule, SamplingParams};

/// Training objective. `HybridFixed` carries its constant SFT/RL mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recipe {
    SftOnly,
    GrpoFull,
    GrpoText,
    DpoFull,
    DpoText,
    HybridDynamic,
    HybridFixed(f64),
}

impl Recipe {
    pub fn uses_rollouts(self) -> bool {
        !matches!(self, Recipe::DpoFull | Recipe::DpoText)
    }

    pub fn uses_pairs(self) -> bool {
        matches!(self, Recipe::DpoFull | Recipe::DpoText)
    }

    pub fn is_dynamic(self) -> bool {
        self == Recipe::HybridDynamic
    }

    /// Positions covered by the RL or preference term.
    pub fn mask_rule(self) -> MaskRule {
        match self {
            Recipe::GrpoFull | Recipe::DpoFull => MaskRule::All,
            _ => MaskRule::TextOnly,
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::SftOnly => f.write_str("SFT_ONLY"),
            Recipe::GrpoFull => f.write_str("GRPO_FULL"),
            Recipe::GrpoText => f.write_str("GRPO_TEXT"),
            Recipe::DpoFull => f.write_str("DPO_FULL"),
            Recipe::DpoText => f.write_str("DPO_TEXT"),
            Recipe::HybridDynamic => f.write_str("HYBRID_DYNAMIC"),
            Recipe::HybridFixed(l) => write!(f, "HYBRID_FIXED({l})"),
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "SFT_ONLY" => Recipe::SftOnly,
            "GRPO_FULL" => Recipe::GrpoFull,
            "GRPO_TEXT" => Recipe::GrpoText,
            "DPO_FULL" => Recipe::DpoFull,
            "DPO_TEXT" => Recipe::DpoText,
            "HYBRID_DYNAMIC" => Recipe::HybridDynamic,
            _ => {
                let inner = s
                    .strip_prefix("HYBRID_FIXED(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown recipe `{s}`")))?;
                let lambda: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad HYBRID_FIXED weight `{inner}`")))?;
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(Error::Config(format!(
                        "HYBRID_FIXED weight must lie in [0, 1], got {lambda}"
                    )));
                }
                Recipe::HybridFixed(lambda)
            }
        })
    }
}

impl TryFrom<String> for Recipe {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recipe> for String {
    fn from(r: Recipe) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub recipe: Recipe,
    pub steps: usize,
    /// Rollouts per prompt (G).
    pub group_size: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Steps between behavior-policy refreshes; 1 is on-policy.
    pub refresh_interval: usize,
    /// Steps between evaluations; 0 evaluates only at the end.
    pub eval_interval: usize,
    /// SFT steps on oracle demonstrations that produce the base policy
    /// (and reference) when no initial checkpoint is supplied.
    pub base_steps: usize,
    pub base_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            recipe: Recipe::HybridDynamic,
            steps: 500,
            group_size: 4,
            temperature: 0.9,
            top_p: 0.9,
            learning_rate: 0.01,
            seed: 0,
            refresh_interval: 1,
            eval_interval: 50,
            base_steps: 30,
            base_learning_rate: 0.05,
        }
    }
}

impl TrainConfig {
    /// `steps = 0` is accepted and means "return the initial policy".
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 1 {
            return Err(Error::Config("train.group_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be finite and >= 0".into()));
        }
        if !(self.base_learning_rate >= 0.0 && self.base_learning_rate.is_finite()) {
            return Err(Error::Config(
                "train.base_learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.refresh_interval < 1 {
            return Err(Error::Config("train.refresh_interval must be >= 1".into()));
        }
        self.sampling().validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("train: {m}")),
            other => other,
        })
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_p: self.top_p,
        }
    }
}
