//! Independent reference implementations and random-instance generators
//! shared by the oracle tests and the acceptance suite. Apart from
//! `criteria`, nothing here calls into the code under test except to build
//! inputs.

#![allow(dead_code)]

pub mod criteria;

use duet::judge::{JudgeScore, PreferencePair};
use duet::objectives::RolloutGroup;
use duet::seqmodel::{
    sample_one, DifferentiableLoss, ModelConfig, PolicyParams, ReferenceSnapshot, SamplingParams,
    Schema, TokenSequence,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small model with every layer (including the zero-initialized output)
/// randomized, so gradients are generic.
pub fn small_params(seed: u64) -> PolicyParams {
    let cfg = ModelConfig {
        text_vocab: 4,
        speech_vocab: 6,
        window: 4,
        embed_dim: 4,
        hidden: 8,
        max_len: 9,
        schema: Schema {
            text_run: 1,
            speech_run: 2,
        },
        init_seed: seed,
        ..ModelConfig::default()
    };
    let p = PolicyParams::init(&cfg).expect("valid config");
    p.perturbed(0.3, &mut rng(seed ^ 0xA5A5))
}

pub fn random_prompt(params: &PolicyParams, r: &mut impl Rng) -> Vec<u32> {
    let v = params.vocab();
    vec![v.bos(), v.text_token(r.random_range(0..v.text_size))]
}

/// A schema-valid sequence sampled from `params`, so every token has
/// positive probability under it.
pub fn random_sequence(params: &PolicyParams, prompt: &[u32], r: &mut impl Rng) -> TokenSequence {
    let sampling = SamplingParams {
        temperature: 1.0,
        top_p: 1.0,
    };
    loop {
        let s = sample_one(params, prompt, sampling, r.random(), 0);
        if !s.is_empty() {
            return s;
        }
    }
}

pub fn random_group(
    behavior: &PolicyParams,
    r: &mut impl Rng,
    g: usize,
) -> RolloutGroup {
    let prompt = random_prompt(behavior, r);
    let members = (0..g).map(|_| random_sequence(behavior, &prompt, r)).collect();
    let rewards = (0..g).map(|_| r.random_range(1.0..5.0)).collect();
    RolloutGroup {
        prompt,
        members,
        rewards,
        behavior: ReferenceSnapshot::new(behavior),
    }
}

/// Central finite differences over every parameter.
pub fn fd_gradient<L: DifferentiableLoss + ?Sized>(params: &PolicyParams, loss: &L, h: f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..p.data.len())
        .map(|i| {
            let x = p.data[i];
            p.data[i] = x + h;
            let up = loss.value(&p).unwrap();
            p.data[i] = x - h;
            let down = loss.value(&p).unwrap();
            p.data[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute gap when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

// ---- statistics -----------------------------------------------------------

pub fn bf_mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

pub fn bf_variance(x: &[f64]) -> f64 {
    let m = bf_mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m) * (v - m);
    }
    s / x.len() as f64
}

/// Covariance-over-product-of-deviations form; `None` when undefined.
pub fn bf_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (bf_mean(x), bf_mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Rank by counting: `1 + #smaller + (#equal - 1) / 2`.
pub fn bf_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let less = x.iter().filter(|b| *b < a).count() as f64;
            let eq = x.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

pub fn bf_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    bf_pearson(&bf_ranks(x), &bf_ranks(y))
}

pub fn bf_mae(j: &[f64], h: &[f64]) -> f64 {
    bf_mean(&j.iter().zip(h).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
}

pub fn bf_pass_rate(j: &[f64], h: &[f64]) -> f64 {
    let ok = j.iter().zip(h).filter(|(a, b)| (*a - *b).abs() <= 1.0).count();
    ok as f64 / j.len() as f64
}

pub fn bf_bias(j: &[f64], h: &[f64]) -> f64 {
    bf_mean(&j.iter().zip(h).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Two-sided sign test by enumerating all `2^n` win/loss assignments.
pub fn bf_sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let total = 1u64 << n;
    let (mut ge_w, mut ge_l) = (0u64, 0u64);
    for mask in 0..total {
        let k = mask.count_ones() as u64;
        if k >= wins {
            ge_w += 1;
        }
        if k >= losses {
            ge_l += 1;
        }
    }
    let tail = ge_w.min(ge_l) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

/// Likert-ish values on a coarse grid so ties are common.
pub fn tied_scores(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 1.0 + 0.5 * r.random_range(0..9) as f64).collect()
}

// ---- preference pairs -----------------------------------------------------

/// Exhaustive scan. Chosen maximizes `(u, sem, ac, -index)`, rejected
/// minimizes the same key.
pub fn bf_pair(scores: &[JudgeScore], lambda: f64, delta: f64) -> Option<(usize, usize, f64)> {
    let u = |s: &JudgeScore| lambda * s.semantic + (1.0 - lambda) * s.acoustic;
    let key = |i: usize| (u(&scores[i]), scores[i].semantic, scores[i].acoustic, -(i as i64));
    let gt = |a: (f64, f64, f64, i64), b: (f64, f64, f64, i64)| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then(a.3.cmp(&b.3))
            == std::cmp::Ordering::Greater
    };
    let mut best = 0;
    let mut worst = 0;
    for i in 1..scores.len() {
        if gt(key(i), key(best)) {
            best = i;
        }
        if gt(key(worst), key(i)) {
            worst = i;
        }
    }
    let gap = u(&scores[best]) - u(&scores[worst]);
    if best == worst || gap < delta {
        None
    } else {
        Some((best, worst, gap))
    }
}

/// Recovers candidate indices of an emitted pair by identity of sequences.
pub fn pair_indices(pair: &PreferencePair, seqs: &[TokenSequence]) -> (usize, usize) {
    let c = seqs.iter().position(|s| *s == pair.chosen).unwrap();
    let r = seqs.iter().position(|s| *s == pair.rejected).unwrap();
    (c, r)
}
