//! Two-axis scoring on the 1-5 Likert scale.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::seqmodel::TokenSequence;

pub const LIKERT_MIN: f64 = 1.0;
pub const LIKERT_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeConfig {
    pub noise_sigma_semantic: f64,
    pub noise_sigma_acoustic: f64,
    /// Semantic weight in the utility used for pair selection.
    pub pair_lambda: f64,
    /// Semantic weight in the scalar reward fed to the RL objective and the gate.
    pub reward_lambda: f64,
    pub margin_delta: f64,
    /// Candidates sampled per prompt when building preference pairs.
    pub pair_candidates: usize,
    pub seed: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            noise_sigma_semantic: 0.3,
            noise_sigma_acoustic: 0.8,
            pair_lambda: 0.5,
            reward_lambda: 1.0,
            margin_delta: 0.5,
            pair_candidates: 8,
            seed: 0,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_semantic >= 0.0 && self.noise_sigma_acoustic >= 0.0) {
            return Err(Error::Config("judge noise sigmas must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pair_lambda) {
            return Err(Error::Config("judge.pair_lambda must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.reward_lambda) {
            return Err(Error::Config("judge.reward_lambda must lie in [0, 1]".into()));
        }
        if !(self.margin_delta >= 0.0) {
            return Err(Error::Config("judge.margin_delta must be >= 0".into()));
        }
        if self.pair_candidates < 2 {
            return Err(Error::Config("judge.pair_candidates must be >= 2".into()));
        }
        Ok(())
    }

    /// The same judge with both noise terms switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma_semantic: 0.0,
            noise_sigma_acoustic: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub semantic: f64,
    pub acoustic: f64,
    /// Set when the response had fewer than two speech tokens and the
    /// acoustic axis fell back to the floor.
    #[serde(default)]
    pub acoustic_floor: bool,
}

/// Standard-normal draws for one judged response.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JudgeNoise {
    pub semantic: f64,
    pub acoustic: f64,
}

impl JudgeNoise {
    /// Draws keyed by `(key, member)` under the judge's seed.
    pub fn draw(cfg: &JudgeConfig, key: u64, member: u64) -> Self {
        let mut rng = stream_rng(cfg.seed, Stream::JudgeNoise, &[key, member]);
        Self {
            semantic: rng.sample(StandardNormal),
            acoustic: rng.sample(StandardNormal),
        }
    }
}

fn clamp_likert(x: f64) -> f64 {
    x.clamp(LIKERT_MIN, LIKERT_MAX)
}

/// Fraction of target positions reproduced exactly; the denominator is the
/// longer of the emitted text stream and the target.
pub fn exact_match_fraction(seq: &TokenSequence, task: &TaskSpec) -> Result<f64> {
    let target = &task
        .find_prompt(&seq.prompt)
        .ok_or_else(|| Error::InvalidSequence("prompt has no target answer".into()))?
        .target;
    let text = seq.text_stream(&task.vocab);
    let hits = text.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / text.len().max(target.len()) as f64)
}

pub fn semantic_score(seq: &TokenSequence, task: &TaskSpec, cfg: &JudgeConfig, z: f64) -> Result<f64> {
    let frac = exact_match_fraction(seq, task)?;
    Ok(clamp_likert(1.0 + 4.0 * frac + cfg.noise_sigma_semantic * z))
}

/// Total-variation distance between the response's empirical speech-bigram
/// distribution and the reference style; `None` below two speech tokens.
pub fn style_tv(seq: &TokenSequence, task: &TaskSpec) -> Option<f64> {
    let speech = seq.speech_stream(&task.vocab);
    if speech.len() < 2 {
        return None;
    }
    let s = task.vocab.speech_size;
    let mut counts = vec![0.0; s * s];
    for w in speech.windows(2) {
        let a = task.vocab.speech_index(w[0]).expect("speech stream");
        let b = task.vocab.speech_index(w[1]).expect("speech stream");
        counts[a * s + b] += 1.0;
    }
    let n = (speech.len() - 1) as f64;
    let tv = 0.5
        * counts
            .iter()
            .zip(&task.style_bigrams)
            .map(|(c, r)| (c / n - r).abs())
            .sum::<f64>();
    Some(tv.clamp(0.0, 1.0))
}

/// Returns the score and whether the floor fallback was used.
pub fn acoustic_score(seq: &TokenSequence, task: &TaskSpec, cfg: &JudgeConfig, z: f64) -> (f64, bool) {
    match style_tv(seq, task) {
        Some(tv) => (clamp_likert(1.0 + 4.0 * (1.0 - tv) + cfg.noise_sigma_acoustic * z), false),
        None => (LIKERT_MIN, true),
    }
}

pub fn judge(seq: &TokenSequence, task: &TaskSpec, cfg: &JudgeConfig, noise: JudgeNoise) -> Result<JudgeScore> {
    seq.validate(&task.vocab)?;
    let semantic = semantic_score(seq, task, cfg, noise.semantic)?;
    let (acoustic, acoustic_floor) = acoustic_score(seq, task, cfg, noise.acoustic);
    Ok(JudgeScore {
        semantic,
        acoustic,
        acoustic_floor,
    })
}

pub fn utility(score: &JudgeScore, lambda: f64) -> f64 {
    lambda * score.semantic + (1.0 - lambda) * score.acoustic
}

/// Anything that can turn responses into two-axis scores and scalar rewards.
pub trait RewardSource {
    /// Scores one response; `key` and `member` select the noise draw.
    fn score(&self, seq: &TokenSequence, key: u64, member: u64) -> Result<JudgeScore>;
    fn reward(&self, score: &JudgeScore) -> f64;
}

/// The simulated judge: noisy two-axis scores against a synthetic task.
#[derive(Debug, Clone)]
pub struct SyntheticJudge<'a> {
    pub task: &'a TaskSpec,
    pub cfg: JudgeConfig,
}

impl RewardSource for SyntheticJudge<'_> {
    fn score(&self, seq: &TokenSequence, key: u64, member: u64) -> Result<JudgeScore> {
        judge(seq, self.task, &self.cfg, JudgeNoise::draw(&self.cfg, key, member))
    }

    fn reward(&self, score: &JudgeScore) -> f64 {
        utility(score, self.cfg.reward_lambda)
    }
}

/// Scores every member of a rollout group; rewards are utilities.
pub fn score_rollout_group(
    source: &dyn RewardSource,
    members: &[TokenSequence],
    key: u64,
) -> Result<(Vec<JudgeScore>, Vec<f64>)> {
    let scores = members
        .iter()
        .enumerate()
        .map(|(i, m)| source.score(m, key, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let rewards = scores.iter().map(|s| source.reward(s)).collect();
    Ok((scores, rewards))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::task::TaskConfig;
    use crate::seqmodel::{Modality, ModelConfig};

    fn task() -> TaskSpec {
        TaskSpec::generate(&ModelConfig::default(), &TaskConfig::default()).unwrap()
    }

    #[test]
    fn oracle_scores_near_top() {
        let t = task();
        let cfg = JudgeConfig::default().noiseless();
        for p in &t.prompts {
            let d = t.oracle_demo(p.id).unwrap();
            let s = judge(&d, &t, &cfg, JudgeNoise::default()).unwrap();
            assert_eq!(s.semantic, 5.0);
            assert!(s.acoustic > 4.5, "{}", s.acoustic);
            assert!(style_tv(&d, &t).unwrap() < 0.125);
        }
    }

    #[test]
    fn noise_is_added_then_clamped() {
        let t = task();
        let d = t.oracle_demo(0).unwrap();
        let cfg = JudgeConfig::default();
        let s = semantic_score(&d, &t, &cfg, -1.0).unwrap();
        assert!((s - 4.7).abs() < 1e-12);
        assert_eq!(semantic_score(&d, &t, &cfg, 2.0).unwrap(), 5.0);
    }

    #[test]
    fn wrong_answer_scores_by_overlap() {
        let t = task();
        let mut d = t.oracle_demo(0).unwrap();
        let len = t.prompts[0].target.len();
        let wrong = (0..t.vocab.text_size as u32)
            .find(|&x| x != d.response[0])
            .unwrap();
        d.response[0] = wrong;
        let frac = exact_match_fraction(&d, &t).unwrap();
        assert!((frac - (len - 1) as f64 / len as f64).abs() < 1e-12);
    }

    #[test]
    fn short_speech_hits_floor() {
        let t = task();
        let p = &t.prompts[0];
        let seq = TokenSequence::new(
            p.tokens.clone(),
            vec![p.target[0], t.vocab.speech_token(0), t.vocab.eos()],
            vec![Modality::Text, Modality::Speech, Modality::Speech],
        );
        let (a, flag) = acoustic_score(&seq, &t, &JudgeConfig::default(), 3.0);
        assert_eq!(a, 1.0);
        assert!(flag);
    }

    #[test]
    fn off_style_speech_scores_low() {
        let t = task();
        let mut d = t.oracle_demo(1).unwrap();
        let off = (0..t.vocab.speech_size)
            .map(|i| t.vocab.speech_token(i))
            .find(|tok| !t.style_cycle.contains(tok))
            .unwrap();
        for (tok, m) in d.response.iter_mut().zip(&d.modality) {
            if *m == Modality::Speech {
                *tok = off;
            }
        }
        assert_eq!(style_tv(&d, &t).unwrap(), 1.0);
        let (a, _) = acoustic_score(&d, &t, &JudgeConfig::default(), 0.0);
        assert_eq!(a, 1.0);
    }

    #[test]
    fn utility_blend() {
        let s = JudgeScore {
            semantic: 5.0,
            acoustic: 1.0,
            acoustic_floor: false,
        };
        assert_eq!(utility(&s, 0.5), 3.0);
        assert_eq!(utility(&s, 1.0), 5.0);
    }

    #[test]
    fn group_noise_is_keyed() {
        let t = task();
        let judge = SyntheticJudge {
            task: &t,
            cfg: JudgeConfig::default(),
        };
        let members = vec![t.oracle_demo(0).unwrap(); 3];
        let (a, ra) = score_rollout_group(&judge, &members, 7).unwrap();
        let (b, rb) = score_rollout_group(&judge, &members, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_ne!(a[0], a[1]);
    }
}
