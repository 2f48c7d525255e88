//! Repeated-sampling pools for judge-reliability audits.
//!
//! Each audit ID is one task prompt; its samples are the oracle
//! demonstration with independent per-token corruption on each axis, so
//! noiseless scores vary within an ID on both axes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::score::{judge, JudgeConfig, JudgeNoise};
use super::task::TaskSpec;
use crate::analysis::AgreementSample;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::seqmodel::{Modality, TokenSequence};

/// Default upper bound on the per-sample corruption rate. Low enough that
/// most samples stay near the oracle, where the acoustic axis's larger noise
/// dominates the within-ID spread.
pub const DEFAULT_AUDIT_MAX_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub id: String,
    pub prompt_id: usize,
    pub sample: usize,
    pub sequence: TokenSequence,
}

/// `n_ids` IDs (cycling over the task prompts) with `n_samples` responses
/// each. Per sample, text and speech corruption rates are drawn uniformly
/// from `[0, max_rate]`.
pub fn audit_pool(
    task: &TaskSpec,
    n_ids: usize,
    n_samples: usize,
    max_rate: f64,
    seed: u64,
) -> Result<Vec<AuditSample>> {
    if n_ids == 0 || n_samples == 0 {
        return Err(Error::Empty("audit pool"));
    }
    if !(0.0..=1.0).contains(&max_rate) {
        return Err(Error::Config("corruption rate must lie in [0, 1]".into()));
    }
    let mut out = Vec::with_capacity(n_ids * n_samples);
    for id in 0..n_ids {
        let prompt_id = id % task.prompts.len();
        let demo = task.oracle_demo(prompt_id)?;
        for sample in 0..n_samples {
            let mut rng = stream_rng(seed, Stream::Audit, &[id as u64, sample as u64]);
            let text_rate = rng.random_range(0.0..=max_rate);
            let speech_rate = rng.random_range(0.0..=max_rate);
            let mut seq = demo.clone();
            for (tok, m) in seq.response.iter_mut().zip(&seq.modality) {
                if task.vocab.is_special(*tok) {
                    continue;
                }
                match m {
                    Modality::Text if rng.random_bool(text_rate) => {
                        *tok = task.vocab.text_token(rng.random_range(0..task.vocab.text_size));
                    }
                    Modality::Speech if rng.random_bool(speech_rate) => {
                        *tok = task
                            .vocab
                            .speech_token(rng.random_range(0..task.vocab.speech_size));
                    }
                    _ => {}
                }
            }
            out.push(AuditSample {
                id: format!("audit-{id:03}"),
                prompt_id,
                sample,
                sequence: seq,
            });
        }
    }
    Ok(out)
}

/// Scores every pool member twice: with judge noise keyed by
/// `(key, index)` standing in for the judge, and noiselessly standing in for
/// the human reference.
pub fn audit_scores(
    task: &TaskSpec,
    cfg: &JudgeConfig,
    pool: &[AuditSample],
    key: u64,
) -> Result<Vec<AgreementSample>> {
    let clean = cfg.noiseless();
    pool.iter()
        .enumerate()
        .map(|(i, s)| {
            let noisy = judge(&s.sequence, task, cfg, JudgeNoise::draw(cfg, key, i as u64))?;
            let truth = judge(&s.sequence, task, &clean, JudgeNoise::default())?;
            Ok(AgreementSample {
                id: s.id.clone(),
                judge_semantic: noisy.semantic,
                judge_acoustic: noisy.acoustic,
                human_semantic: truth.semantic,
                human_acoustic: truth.acoustic,
            })
        })
        .collect()
}
