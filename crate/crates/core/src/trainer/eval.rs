use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{judge, style_tv, utility, JudgeConfig, JudgeNoise, TaskSpec};
use crate::seqmodel::{greedy_decode, PolicyParams};

/// Noise-free greedy evaluation over a prompt set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mean_reward: f64,
    pub mean_semantic: f64,
    pub mean_acoustic: f64,
    /// Mean total-variation distance between each response's speech bigrams
    /// and the reference style. Responses with fewer than two speech tokens
    /// count as 1.
    pub speech_style_tv: f64,
}

pub fn evaluate_policy(
    params: &PolicyParams,
    task: &TaskSpec,
    prompt_ids: &[usize],
    judge_cfg: &JudgeConfig,
) -> Result<EvalMetrics> {
    if prompt_ids.is_empty() {
        return Err(Error::Empty("evaluation prompt set"));
    }
    let clean = judge_cfg.noiseless();
    let mut m = EvalMetrics {
        mean_reward: 0.0,
        mean_semantic: 0.0,
        mean_acoustic: 0.0,
        speech_style_tv: 0.0,
    };
    for &id in prompt_ids {
        let prompt = task.prompt(id)?;
        let seq = greedy_decode(params, &prompt.tokens);
        let s = judge(&seq, task, &clean, JudgeNoise::default())?;
        m.mean_reward += utility(&s, clean.reward_lambda);
        m.mean_semantic += s.semantic;
        m.mean_acoustic += s.acoustic;
        m.speech_style_tv += style_tv(&seq, task).unwrap_or(1.0);
    }
    let n = prompt_ids.len() as f64;
    m.mean_reward /= n;
    m.mean_semantic /= n;
    m.mean_acoustic /= n;
    m.speech_style_tv /= n;
    Ok(m)
}

/// All task prompts, in id order.
pub fn all_prompts(task: &TaskSpec) -> Vec<usize> {
    (0..task.prompts.len()).collect()
}
