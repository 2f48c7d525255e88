use rand::Rng;

use super::forward::{context_window, forward_position};
use super::params::PolicyParams;
use super::sequence::TokenSequence;
use super::vocab::{Modality, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Slack for floating-point accumulation when comparing cumulative mass to
/// the nucleus threshold.
const NUCLEUS_SLACK: f64 = 1e-12;

/// Decoding parameters shared by rollouts and pair building.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// Temperature-scaled, nucleus-truncated distribution over `logits`.
///
/// Entries equal to `-inf` are treated as excluded. The nucleus is the
/// smallest set of highest-probability tokens (ties broken by lower id) whose
/// mass reaches `top_p`; it is renormalized to sum to one.
pub fn nucleus_distribution(logits: &[f64], temperature: f64, top_p: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    if top_p >= 1.0 {
        return probs;
    }

    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut keep = vec![false; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        keep[i] = true;
        mass += probs[i];
        if mass >= top_p - NUCLEUS_SLACK {
            break;
        }
    }
    let mut out: Vec<f64> = probs
        .iter()
        .zip(&keep)
        .map(|(&p, &k)| if k { p } else { 0.0 })
        .collect();
    let kept: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= kept);
    out
}

/// Tokens the generation schema allows at a slot: the slot's stream plus EOS.
pub fn slot_allows(vocab: &Vocabulary, slot: Modality, token: TokenId) -> bool {
    token == vocab.eos()
        || match slot {
            Modality::Text => vocab.is_text(token),
            Modality::Speech => vocab.is_speech(token),
        }
}

/// Log-probabilities with tokens outside the slot's stream set to `-inf`.
fn constrain(vocab: &Vocabulary, slot: Modality, log_probs: &[f64]) -> Vec<f64> {
    log_probs
        .iter()
        .enumerate()
        .map(|(k, &lp)| {
            if slot_allows(vocab, slot, k as TokenId) {
                lp
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn draw<R: Rng>(dist: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k as TokenId;
        }
    }
    last as TokenId
}

/// Autoregressive generation following the interleaving schema. Decoding
/// stops at EOS or at `max_len`, in which case the sequence is flagged
/// `truncated`.
fn generate(
    params: &PolicyParams,
    prompt: &[TokenId],
    mut pick: impl FnMut(&[f64]) -> TokenId,
) -> TokenSequence {
    let vocab = params.vocab();
    let schema = params.config.schema;
    let mut response = Vec::new();
    let mut modality = Vec::new();
    let mut truncated = true;
    for t in 0..params.config.max_len {
        let slot = schema.slot(t);
        let ctx = context_window(params, prompt, &response);
        let cache = forward_position(params, &ctx);
        let tok = pick(&constrain(&vocab, slot, &cache.log_probs));
        response.push(tok);
        modality.push(slot);
        if tok == vocab.eos() {
            truncated = false;
            break;
        }
    }
    TokenSequence {
        prompt: prompt.to_vec(),
        response,
        modality,
        truncated,
    }
}

/// Samples one trajectory. The stream is a pure function of `(seed, member)`.
pub fn sample_one(
    params: &PolicyParams,
    prompt: &[TokenId],
    sampling: SamplingParams,
    seed: u64,
    member: u64,
) -> TokenSequence {
    let mut rng = stream_rng(seed, Stream::Rollout, &[member]);
    generate(params, prompt, |lp| {
        draw(
            &nucleus_distribution(lp, sampling.temperature, sampling.top_p),
            &mut rng,
        )
    })
}

/// `g` independent trajectories for one prompt.
pub fn sample_group(
    params: &PolicyParams,
    prompt: &[TokenId],
    g: usize,
    sampling: SamplingParams,
    seed: u64,
) -> Result<Vec<TokenSequence>> {
    if g == 0 {
        return Err(Error::Config("group size must be at least 1".into()));
    }
    sampling.validate()?;
    for &t in prompt {
        params.vocab().check(t)?;
    }
    Ok((0..g as u64)
        .map(|i| sample_one(params, prompt, sampling, seed, i))
        .collect())
}

/// Greedy decoding; ties go to the lowest token id.
pub fn greedy_decode(params: &PolicyParams, prompt: &[TokenId]) -> TokenSequence {
    generate(params, prompt, |lp| {
        let mut best = 0;
        for (k, &x) in lp.iter().enumerate() {
            if x > lp[best] {
                best = k;
            }
        }
        best as TokenId
    })
}
