use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::judge::{build_preference_pair, JudgeConfig, PreferencePair, RewardSource, SyntheticJudge, TaskSpec};
use crate::rng::{derive_seed, Stream};
use crate::seqmodel::{sample_group, PolicyParams, SamplingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairSummary {
    pub total_prompts: usize,
    pub kept: usize,
    /// Prompts whose best-worst gap fell below the margin.
    pub dropped_by_margin: usize,
    /// Prompts with fewer than two usable (non-truncated) samples.
    pub skipped: usize,
}

/// Repeated sampling, judging and pair selection for each prompt. Truncated
/// samples are discarded before selection.
pub fn build_pairs(
    params: &PolicyParams,
    task: &TaskSpec,
    prompt_ids: &[usize],
    judge_cfg: &JudgeConfig,
    sampling: SamplingParams,
    n: usize,
    seed: u64,
) -> Result<(Vec<(usize, PreferencePair)>, PairSummary)> {
    judge_cfg.validate()?;
    let judge = SyntheticJudge {
        task,
        cfg: judge_cfg.clone(),
    };
    let mut pairs = Vec::new();
    let mut summary = PairSummary {
        total_prompts: prompt_ids.len(),
        ..PairSummary::default()
    };
    for &id in prompt_ids {
        let prompt = task.prompt(id)?;
        let key = derive_seed(seed, Stream::Pairs, &[id as u64]);
        let samples = sample_group(params, &prompt.tokens, n, sampling, key)?;
        let mut candidates = Vec::with_capacity(n);
        for (member, seq) in samples.into_iter().enumerate() {
            if seq.truncated {
                continue;
            }
            let score = judge.score(&seq, key, member as u64)?;
            candidates.push((seq, score));
        }
        if candidates.len() < 2 {
            summary.skipped += 1;
            continue;
        }
        match build_preference_pair(&candidates, judge_cfg)? {
            Some(p) => {
                summary.kept += 1;
                pairs.push((id, p));
            }
            None => summary.dropped_by_margin += 1,
        }
    }
    Ok((pairs, summary))
}
