//! Post-training losses: SFT, GRPO, DPO, token-masked scores and the hybrid
//! SFT + text-masked GRPO combination.
//!
//! Every loss implements [`DifferentiableLoss`], so its exact gradient comes
//! from the same logit-level backprop used everywhere else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{
    forward_sequence, DifferentiableLoss, LossEval, MaskRule, Modality, PolicyParams,
    ReferenceSnapshot, SequenceForward, SequenceGrad, TokenId, TokenSequence,
};

/// Clipped-surrogate and KL settings. Defaults: epsilon 0.2, both betas 0.01.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub epsilon_clip: f64,
    pub beta_text: f64,
    pub beta_speech: f64,
    /// Additive floor on the group reward std.
    pub advantage_epsilon: f64,
    /// Keep the speech-position KL anchor when the surrogate is text-masked.
    pub speech_kl_under_text_mask: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            epsilon_clip: 0.2,
            beta_text: 0.01,
            beta_speech: 0.01,
            advantage_epsilon: 1e-6,
            speech_kl_under_text_mask: true,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_clip > 0.0) {
            return Err(Error::Config("objectives.grpo.epsilon_clip must be > 0".into()));
        }
        if !(self.beta_text >= 0.0 && self.beta_speech >= 0.0) {
            return Err(Error::Config("objectives.grpo betas must be >= 0".into()));
        }
        if !(self.advantage_epsilon > 0.0) {
            return Err(Error::Config(
                "objectives.grpo.advantage_epsilon must be > 0".into(),
            ));
        }
        Ok(())
    }

    fn beta(&self, m: Modality) -> f64 {
        match m {
            Modality::Text => self.beta_text,
            Modality::Speech => self.beta_speech,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpoConfig {
    /// Temperature on the log-ratio gap.
    pub gamma: f64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self { gamma: 0.1 }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config("objectives.dpo.gamma must be > 0".into()));
        }
        Ok(())
    }
}

/// G rollouts for one prompt, their rewards, and the behavior policy that
/// produced them.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub prompt: Vec<TokenId>,
    pub members: Vec<TokenSequence>,
    pub rewards: Vec<f64>,
    pub behavior: ReferenceSnapshot,
}

impl RolloutGroup {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Empty("rollout group"));
        }
        if self.members.len() != self.rewards.len() {
            return Err(Error::LengthMismatch(format!(
                "{} members but {} rewards",
                self.members.len(),
                self.rewards.len()
            )));
        }
        if let Some(r) = self.rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("reward {r}")));
        }
        Ok(())
    }
}

/// Teacher-forcing cross-entropy on a demonstration, summed over every
/// response position.
#[derive(Debug, Clone, Copy)]
pub struct SftLoss<'a> {
    pub demo: &'a TokenSequence,
}

impl DifferentiableLoss for SftLoss<'_> {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval> {
        if self.demo.is_empty() {
            log::warn!("SFT demonstration has an empty response; loss is 0");
            return Ok(LossEval::constant(0.0));
        }
        let fwd = forward_sequence(params, self.demo)?;
        let value = -fwd.token_logprobs().iter().sum::<f64>();
        let mut g = SequenceGrad::new(fwd);
        for t in 0..self.demo.len() {
            g.add_logprob_grad(t, -1.0);
        }
        Ok(LossEval {
            value,
            grads: vec![g],
        })
    }
}

pub fn sft_loss(params: &PolicyParams, demo: &TokenSequence) -> Result<f64> {
    SftLoss { demo }.value(params)
}

/// s_M: sum of token log-probabilities over the positions in `mask`.
/// This is a score (to be maximized), not a loss.
#[derive(Debug, Clone)]
pub struct MaskedScore<'a> {
    pub seq: &'a TokenSequence,
    pub mask: Vec<usize>,
}

impl<'a> MaskedScore<'a> {
    pub fn new(seq: &'a TokenSequence, mask: Vec<usize>) -> Result<Self> {
        if let Some(&index) = mask.iter().find(|&&i| i >= seq.len()) {
            return Err(Error::MaskOutOfRange {
                index,
                len: seq.len(),
            });
        }
        Ok(Self { seq, mask })
    }

    pub fn with_rule(seq: &'a TokenSequence, rule: MaskRule) -> Self {
        Self {
            seq,
            mask: rule.positions(seq),
        }
    }

    fn score_and_grad(&self, params: &PolicyParams, scale: f64) -> Result<(f64, SequenceGrad)> {
        let fwd = forward_sequence(params, self.seq)?;
        let lps = fwd.token_logprobs();
        let value = self.mask.iter().map(|&t| lps[t]).sum();
        let mut g = SequenceGrad::new(fwd);
        for &t in &self.mask {
            g.add_logprob_grad(t, scale);
        }
        Ok((value, g))
    }
}

impl DifferentiableLoss for MaskedScore<'_> {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval> {
        let (value, g) = self.score_and_grad(params, 1.0)?;
        Ok(LossEval {
            value,
            grads: vec![g],
        })
    }
}

pub fn masked_score(params: &PolicyParams, seq: &TokenSequence, mask: &[usize]) -> Result<f64> {
    MaskedScore::new(seq, mask.to_vec())?.value(params)
}

/// Group-relative advantages `(R_i - mean) / (std + eps)` with the
/// population std. A constant group maps to exact zeros.
pub fn group_advantages(rewards: &[f64], advantage_epsilon: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward list"));
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + advantage_epsilon;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Value decomposition of the GRPO loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoParts {
    /// `-(1/G) sum_i sum_t min(rho A, clip(rho) A)`.
    pub surrogate: f64,
    /// `(1/G) sum_i mean_t beta_t KL_t`.
    pub kl: f64,
}

/// Clipped surrogate with per-modality KL to the reference policy.
#[derive(Debug, Clone, Copy)]
pub struct GrpoLoss<'a> {
    pub group: &'a RolloutGroup,
    pub reference: &'a ReferenceSnapshot,
    pub cfg: &'a GrpoConfig,
    pub mask_rule: MaskRule,
}

impl GrpoLoss<'_> {
    pub fn evaluate_parts(&self, params: &PolicyParams) -> Result<(GrpoParts, LossEval)> {
        self.group.validate()?;
        self.cfg.validate()?;
        let adv = group_advantages(&self.group.rewards, self.cfg.advantage_epsilon)?;
        let g = self.group.members.len() as f64;
        let (lo, hi) = (1.0 - self.cfg.epsilon_clip, 1.0 + self.cfg.epsilon_clip);
        let mut surrogate = 0.0;
        let mut kl_total = 0.0;
        let mut grads = Vec::with_capacity(self.group.members.len());

        for (i, (seq, &a)) in self.group.members.iter().zip(&adv).enumerate() {
            let fwd = forward_sequence(params, seq)?;
            let old = forward_sequence(self.group.behavior.params(), seq)?.token_logprobs();
            let lps = fwd.token_logprobs();
            let mut sg = SequenceGrad::new(fwd);

            for t in self.mask_rule.positions(seq) {
                if old[t] == f64::NEG_INFINITY {
                    return Err(Error::ZeroBehaviorProbability {
                        member: i,
                        position: t,
                    });
                }
                let rho = (lps[t] - old[t]).exp();
                let unclipped = rho * a;
                let clipped = rho.clamp(lo, hi) * a;
                if unclipped <= clipped {
                    surrogate -= unclipped / g;
                    if a != 0.0 {
                        sg.add_logprob_grad(t, -unclipped / g);
                    }
                } else {
                    surrogate -= clipped / g;
                }
            }

            if !seq.is_empty() {
                let ref_fwd = forward_sequence(self.reference.params(), seq)?;
                let per_pos = 1.0 / (g * seq.len() as f64);
                for t in 0..seq.len() {
                    let m = seq.modality[t];
                    if self.mask_rule == MaskRule::TextOnly
                        && m == Modality::Speech
                        && !self.cfg.speech_kl_under_text_mask
                    {
                        continue;
                    }
                    let beta = self.cfg.beta(m);
                    if beta == 0.0 {
                        continue;
                    }
                    let w = beta * per_pos;
                    kl_total += w * add_kl_grad(&mut sg, &ref_fwd, t, w);
                }
            }
            grads.push(sg);
        }

        let parts = GrpoParts {
            surrogate,
            kl: kl_total,
        };
        Ok((
            parts,
            LossEval {
                value: surrogate + kl_total,
                grads,
            },
        ))
    }
}

/// Adds `w * dKL/dz` at position `t` and returns KL(pi_theta || pi_ref).
fn add_kl_grad(sg: &mut SequenceGrad, reference: &SequenceForward, t: usize, w: f64) -> f64 {
    let lp = sg.forward.positions[t].log_probs.clone();
    let lr = &reference.positions[t].log_probs;
    let kl: f64 = lp
        .iter()
        .zip(lr)
        .map(|(a, b)| a.exp() * (a - b))
        .sum();
    let slot = sg.slot(t);
    for ((s, a), b) in slot.iter_mut().zip(&lp).zip(lr) {
        *s += w * a.exp() * (a - b - kl);
    }
    kl
}

impl DifferentiableLoss for GrpoLoss<'_> {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval> {
        Ok(self.evaluate_parts(params)?.1)
    }
}

pub fn grpo_loss(
    params: &PolicyParams,
    group: &RolloutGroup,
    reference: &ReferenceSnapshot,
    cfg: &GrpoConfig,
    mask_rule: MaskRule,
) -> Result<f64> {
    GrpoLoss {
        group,
        reference,
        cfg,
        mask_rule,
    }
    .value(params)
}

fn check_pair(chosen: &TokenSequence, rejected: &TokenSequence) -> Result<()> {
    if chosen.prompt != rejected.prompt {
        return Err(Error::InvalidSequence(
            "preference pair members must share the prompt".into(),
        ));
    }
    Ok(())
}

/// Reference-corrected log-ratio gap with masked scores in place of full
/// sequence log-likelihoods.
pub fn dpo_delta(
    params: &PolicyParams,
    reference: &ReferenceSnapshot,
    chosen: &TokenSequence,
    rejected: &TokenSequence,
    mask_rule: MaskRule,
) -> Result<f64> {
    check_pair(chosen, rejected)?;
    let s = |p: &PolicyParams, y: &TokenSequence| MaskedScore::with_rule(y, mask_rule).value(p);
    Ok((s(params, chosen)? - s(params, rejected)?)
        - (s(reference.params(), chosen)? - s(reference.params(), rejected)?))
}

/// `-log sigmoid(gamma * delta)`, evaluated without overflow.
pub fn dpo_loss(delta: f64, cfg: &DpoConfig) -> f64 {
    softplus(-cfg.gamma * delta)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DpoLoss<'a> {
    pub chosen: &'a TokenSequence,
    pub rejected: &'a TokenSequence,
    pub reference: &'a ReferenceSnapshot,
    pub cfg: &'a DpoConfig,
    pub mask_rule: MaskRule,
}

impl DifferentiableLoss for DpoLoss<'_> {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval> {
        check_pair(self.chosen, self.rejected)?;
        self.cfg.validate()?;
        let delta = dpo_delta(
            params,
            self.reference,
            self.chosen,
            self.rejected,
            self.mask_rule,
        )?;
        let x = self.cfg.gamma * delta;
        // d/d(delta) of -log sigmoid(gamma * delta)
        let dl = -self.cfg.gamma * sigmoid(-x);
        let (_, gp) = MaskedScore::with_rule(self.chosen, self.mask_rule).score_and_grad(params, dl)?;
        let (_, gn) =
            MaskedScore::with_rule(self.rejected, self.mask_rule).score_and_grad(params, -dl)?;
        Ok(LossEval {
            value: softplus(-x),
            grads: vec![gp, gn],
        })
    }
}

/// `(1 - lambda) * SFT(all tokens) + lambda * GRPO(text-masked)`.
#[derive(Debug, Clone, Copy)]
pub struct HybridLoss<'a> {
    pub demo: &'a TokenSequence,
    pub group: &'a RolloutGroup,
    pub reference: &'a ReferenceSnapshot,
    pub cfg: &'a GrpoConfig,
    pub lambda: f64,
}

/// Value decomposition of the hybrid loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridParts {
    pub sft: f64,
    pub grpo: GrpoParts,
    pub lambda: f64,
}

impl HybridLoss<'_> {
    pub fn evaluate_parts(&self, params: &PolicyParams) -> Result<(HybridParts, LossEval)> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "hybrid weight must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        let sft = SftLoss { demo: self.demo }.evaluate(params)?;
        let (grpo_parts, grpo) = GrpoLoss {
            group: self.group,
            reference: self.reference,
            cfg: self.cfg,
            mask_rule: MaskRule::TextOnly,
        }
        .evaluate_parts(params)?;
        let parts = HybridParts {
            sft: sft.value,
            grpo: grpo_parts,
            lambda: self.lambda,
        };
        Ok((parts, sft.combine(1.0 - self.lambda, grpo, self.lambda)))
    }
}

impl DifferentiableLoss for HybridLoss<'_> {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval> {
        Ok(self.evaluate_parts(params)?.1)
    }
}

pub fn hybrid_loss(
    params: &PolicyParams,
    demo: &TokenSequence,
    group: &RolloutGroup,
    reference: &ReferenceSnapshot,
    cfg: &GrpoConfig,
    lambda: f64,
) -> Result<f64> {
    HybridLoss {
        demo,
        group,
        reference,
        cfg,
        lambda,
    }
    .value(params)
}
