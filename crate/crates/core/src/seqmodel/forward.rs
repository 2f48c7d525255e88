//! Forward pass, teacher-forced log-probabilities and analytic backprop.
//!
//! The predictor for response position `t` sees the last `W` tokens of
//! `prompt ++ response[..t]` (left-padded with BOS), concatenates their
//! embeddings, applies one tanh hidden layer and a linear output layer over
//! the full vocabulary.

use super::params::{Gradient, PolicyParams};
use super::sequence::TokenSequence;
use super::vocab::{Modality, TokenId};
use crate::error::Result;

/// Cached activations for one predicted position.
#[derive(Debug, Clone)]
pub struct PositionCache {
    pub context: Vec<TokenId>,
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl PositionCache {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }
}

/// Teacher-forced forward pass over a whole response.
#[derive(Debug, Clone)]
pub struct SequenceForward {
    pub positions: Vec<PositionCache>,
    pub targets: Vec<TokenId>,
    pub modality: Vec<Modality>,
}

impl SequenceForward {
    /// log pi(y_t | x, y_<t) for every response position.
    pub fn token_logprobs(&self) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.targets)
            .map(|(p, &y)| p.log_probs[y as usize])
            .collect()
    }
}

/// Window of the `W` tokens preceding response position `t`.
pub fn context_window(params: &PolicyParams, prompt: &[TokenId], response: &[TokenId]) -> Vec<TokenId> {
    let w = params.config.window;
    let bos = params.vocab().bos();
    let mut ctx = vec![bos; w];
    let history = prompt.iter().chain(response.iter());
    let n = prompt.len() + response.len();
    let skip = n.saturating_sub(w);
    for (slot, &tok) in ctx[w - (n - skip)..].iter_mut().zip(history.skip(skip)) {
        *slot = tok;
    }
    ctx
}

/// Forward pass for a single context window.
pub fn forward_position(params: &PolicyParams, context: &[TokenId]) -> PositionCache {
    let cfg = &params.config;
    let layout = params.layout();
    let (d, h, v) = (cfg.embed_dim, cfg.hidden, cfg.vocab().size());
    let emb = &params.data[layout.segments[0].range()];
    let hid = &params.data[layout.segments[1].range()];
    let out = &params.data[layout.segments[2].range()];
    let in_dim = cfg.window * d;

    let mut input = Vec::with_capacity(in_dim);
    for &tok in context {
        let row = tok as usize * d;
        input.extend_from_slice(&emb[row..row + d]);
    }

    let mut hidden = Vec::with_capacity(h);
    for j in 0..h {
        let row = &hid[j * (in_dim + 1)..(j + 1) * (in_dim + 1)];
        let mut a = row[in_dim];
        for (w, x) in row[..in_dim].iter().zip(&input) {
            a += w * x;
        }
        hidden.push(a.tanh());
    }

    let mut logits = Vec::with_capacity(v);
    for k in 0..v {
        let row = &out[k * (h + 1)..(k + 1) * (h + 1)];
        let mut z = row[h];
        for (w, x) in row[..h].iter().zip(&hidden) {
            z += w * x;
        }
        logits.push(z);
    }

    PositionCache {
        context: context.to_vec(),
        input,
        hidden,
        log_probs: log_softmax(&logits),
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Teacher-forced pass over `seq`. Validates the sequence first.
pub fn forward_sequence(params: &PolicyParams, seq: &TokenSequence) -> Result<SequenceForward> {
    seq.validate(&params.vocab())?;
    let positions = (0..seq.len())
        .map(|t| {
            let ctx = context_window(params, &seq.prompt, &seq.response[..t]);
            forward_position(params, &ctx)
        })
        .collect();
    Ok(SequenceForward {
        positions,
        targets: seq.response.clone(),
        modality: seq.modality.clone(),
    })
}

/// Per-position log pi_theta(y_t | x, y_<t).
pub fn token_logprobs(params: &PolicyParams, seq: &TokenSequence) -> Result<Vec<f64>> {
    Ok(forward_sequence(params, seq)?.token_logprobs())
}

/// The token-type partition of the sequence log-likelihood:
/// `(sum over I_T, sum over I_S)`.
pub fn logprob_partitioned(params: &PolicyParams, seq: &TokenSequence) -> Result<(f64, f64)> {
    let lps = token_logprobs(params, seq)?;
    let mut text = 0.0;
    let mut speech = 0.0;
    for (lp, m) in lps.iter().zip(&seq.modality) {
        match m {
            Modality::Text => text += lp,
            Modality::Speech => speech += lp,
        }
    }
    Ok((text, speech))
}

/// Gradient of a loss with respect to the logits of one sequence, stored
/// sparsely: positions that the loss does not touch have no entry.
#[derive(Debug, Clone)]
pub struct SequenceGrad {
    pub forward: SequenceForward,
    pub dlogits: Vec<(usize, Vec<f64>)>,
}

impl SequenceGrad {
    pub fn new(forward: SequenceForward) -> Self {
        Self {
            forward,
            dlogits: Vec::new(),
        }
    }

    /// Adds `scale * (onehot(y_t) - pi_t)`, the logit gradient of
    /// `scale * log pi(y_t)`.
    pub fn add_logprob_grad(&mut self, t: usize, scale: f64) {
        let y = self.forward.targets[t] as usize;
        let probs: Vec<f64> = self.forward.positions[t].log_probs.iter().map(|lp| lp.exp()).collect();
        let slot = self.slot(t);
        for (k, (g, p)) in slot.iter_mut().zip(probs).enumerate() {
            let onehot = if k == y { 1.0 } else { 0.0 };
            *g += scale * (onehot - p);
        }
    }

    /// Mutable accumulator for position `t`, created on first use.
    pub fn slot(&mut self, t: usize) -> &mut Vec<f64> {
        let v = self.forward.positions[t].log_probs.len();
        let idx = match self.dlogits.iter().position(|(p, _)| *p == t) {
            Some(i) => i,
            None => {
                self.dlogits.push((t, vec![0.0; v]));
                self.dlogits.len() - 1
            }
        };
        &mut self.dlogits[idx].1
    }

    /// Dense per-position logit gradient (zeros where the loss is silent).
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let v = self
            .forward
            .positions
            .first()
            .map_or(0, |p| p.log_probs.len());
        let mut out = vec![vec![0.0; v]; self.forward.positions.len()];
        for (t, g) in &self.dlogits {
            for (o, x) in out[*t].iter_mut().zip(g) {
                *o += x;
            }
        }
        out
    }
}

/// Value of a scalar loss together with its logit-level gradient.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grads: Vec<SequenceGrad>,
}

impl LossEval {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grads: Vec::new(),
        }
    }

    /// `a * self + b * other`, concatenating the gradient terms.
    pub fn combine(self, a: f64, other: LossEval, b: f64) -> LossEval {
        let mut grads = Vec::with_capacity(self.grads.len() + other.grads.len());
        for (mut g, s) in self
            .grads
            .into_iter()
            .map(|g| (g, a))
            .chain(other.grads.into_iter().map(|g| (g, b)))
        {
            for (_, v) in &mut g.dlogits {
                for x in v.iter_mut() {
                    *x *= s;
                }
            }
            grads.push(g);
        }
        LossEval {
            value: a * self.value + b * other.value,
            grads,
        }
    }
}

/// A scalar objective whose gradient flows through per-position logits.
pub trait DifferentiableLoss {
    fn evaluate(&self, params: &PolicyParams) -> Result<LossEval>;

    fn value(&self, params: &PolicyParams) -> Result<f64> {
        Ok(self.evaluate(params)?.value)
    }
}

/// A loss that does not depend on the parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLoss(pub f64);

impl DifferentiableLoss for ConstantLoss {
    fn evaluate(&self, _params: &PolicyParams) -> Result<LossEval> {
        Ok(LossEval::constant(self.0))
    }
}

/// Exact gradient of `loss` with respect to every parameter.
pub fn grad_of_scalar<L: DifferentiableLoss + ?Sized>(
    params: &PolicyParams,
    loss: &L,
) -> Result<Gradient> {
    let eval = loss.evaluate(params)?;
    Ok(backprop(params, &eval.grads, |_| true))
}

/// Maps logit gradients back to parameters, keeping only positions whose
/// modality passes `keep`. Accumulation order is fixed (terms in order,
/// positions in order) so results are bit-reproducible.
pub fn backprop(
    params: &PolicyParams,
    grads: &[SequenceGrad],
    keep: impl Fn(Modality) -> bool,
) -> Gradient {
    let cfg = &params.config;
    let layout = params.layout();
    let (d, h) = (cfg.embed_dim, cfg.hidden);
    let in_dim = cfg.window * d;
    let hid_w = &params.data[layout.segments[1].range()];
    let out_w = &params.data[layout.segments[2].range()];
    let (emb_off, hid_off, out_off) = (
        layout.segments[0].offset,
        layout.segments[1].offset,
        layout.segments[2].offset,
    );
    let mut g = Gradient::zeros(layout);
    let mut dh = vec![0.0; h];
    let mut dx = vec![0.0; in_dim];

    for term in grads {
        for (t, dz) in &term.dlogits {
            if !keep(term.forward.modality[*t]) {
                continue;
            }
            let cache = &term.forward.positions[*t];
            dh.iter_mut().for_each(|x| *x = 0.0);
            for (k, &dzk) in dz.iter().enumerate() {
                if dzk == 0.0 {
                    continue;
                }
                let row = k * (h + 1);
                let grow = &mut g.data[out_off + row..out_off + row + h + 1];
                for j in 0..h {
                    grow[j] += dzk * cache.hidden[j];
                    dh[j] += out_w[row + j] * dzk;
                }
                grow[h] += dzk;
            }
            dx.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..h {
                let da = dh[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
                if da == 0.0 {
                    continue;
                }
                let row = j * (in_dim + 1);
                let grow = &mut g.data[hid_off + row..hid_off + row + in_dim + 1];
                for i in 0..in_dim {
                    grow[i] += da * cache.input[i];
                    dx[i] += hid_w[row + i] * da;
                }
                grow[in_dim] += da;
            }
            for (slot, &tok) in cache.context.iter().enumerate() {
                let row = emb_off + tok as usize * d;
                for c in 0..d {
                    g.data[row + c] += dx[slot * d + c];
                }
            }
        }
    }
    g
}
