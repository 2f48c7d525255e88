//! Dynamic mixing weight for the hybrid objective.
//!
//! Per step, the controller reads the group rewards and computes
//!
//! ```text
//! v_t       = clip(Var(R) / 4, 0, 1)                 information gate
//! g_t       = sigmoid(k * (max(R) - 3))              direction gate
//! lambda_raw = lambda_max * g_t * v_t
//! lambda_t   = (1 - alpha) * lambda_raw + alpha * lambda_{t-1}
//! ```
//!
//! `4` is the largest population variance on a 1-5 Likert scale and `3` is
//! the neutral score; both are configurable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    /// Sigmoid slope of the direction gate.
    pub k: f64,
    pub lambda_max: f64,
    /// EMA coefficient on the previous weight.
    pub alpha: f64,
    /// Reward regarded as neutral/acceptable.
    pub neutral: f64,
    pub likert_max_var: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            k: 2.0,
            lambda_max: 0.8,
            alpha: 0.9,
            neutral: 3.0,
            likert_max_var: 4.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::Config("gate.k must be > 0".into()));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max <= 1.0) {
            return Err(Error::Config("gate.lambda_max must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config("gate.alpha must lie in [0, 1)".into()));
        }
        if !(self.likert_max_var > 0.0) {
            return Err(Error::Config("gate.likert_max_var must be > 0".into()));
        }
        if !self.neutral.is_finite() {
            return Err(Error::Config("gate.neutral must be finite".into()));
        }
        Ok(())
    }
}

/// Controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GateState {
    pub lambda_prev: f64,
    pub step_index: u64,
}

/// Intermediate values of one controller step, for the metric log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDiagnostics {
    pub v_t: f64,
    pub g_t: f64,
    pub lambda_raw: f64,
    pub lambda_t: f64,
}

fn check_rewards(rewards: &[f64]) -> Result<()> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward list"));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("reward {r}")));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Population variance of the rewards over the Likert maximum, clipped to [0, 1].
pub fn normalized_variance(rewards: &[f64], cfg: &GateConfig) -> Result<f64> {
    check_rewards(rewards)?;
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(0.0);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((var / cfg.likert_max_var).clamp(0.0, 1.0))
}

pub fn direction_gate(rewards: &[f64], cfg: &GateConfig) -> Result<f64> {
    check_rewards(rewards)?;
    let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(sigmoid(cfg.k * (r_max - cfg.neutral)))
}

pub fn raw_lambda(rewards: &[f64], cfg: &GateConfig) -> Result<f64> {
    Ok(cfg.lambda_max * direction_gate(rewards, cfg)? * normalized_variance(rewards, cfg)?)
}

/// One EMA step; returns `lambda_t` and the updated state.
pub fn ema_update(state: GateState, lambda_raw: f64, cfg: &GateConfig) -> Result<(f64, GateState)> {
    if !(0.0..=cfg.lambda_max).contains(&lambda_raw) {
        return Err(Error::Config(format!(
            "lambda_raw {lambda_raw} outside [0, {}]",
            cfg.lambda_max
        )));
    }
    let lambda_t = ((1.0 - cfg.alpha) * lambda_raw + cfg.alpha * state.lambda_prev)
        .clamp(0.0, cfg.lambda_max);
    Ok((
        lambda_t,
        GateState {
            lambda_prev: lambda_t,
            step_index: state.step_index + 1,
        },
    ))
}

/// Full controller step. On error the caller's state is untouched.
pub fn gate_step(
    state: GateState,
    rewards: &[f64],
    cfg: &GateConfig,
) -> Result<(f64, GateState, GateDiagnostics)> {
    cfg.validate()?;
    let v_t = normalized_variance(rewards, cfg)?;
    let g_t = direction_gate(rewards, cfg)?;
    let lambda_raw = cfg.lambda_max * g_t * v_t;
    let (lambda_t, next) = ema_update(state, lambda_raw, cfg)?;
    Ok((
        lambda_t,
        next,
        GateDiagnostics {
            v_t,
            g_t,
            lambda_raw,
            lambda_t,
        },
    ))
}
