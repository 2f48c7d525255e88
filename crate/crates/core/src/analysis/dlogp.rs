//! Per-token log-probability shift between two policies.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seqmodel::{token_logprobs, Modality, PolicyParams, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionDelta {
    pub position: usize,
    pub modality: Modality,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLogp {
    pub positions: Vec<PositionDelta>,
    pub mean_text: Option<f64>,
    pub mean_speech: Option<f64>,
    pub mean_all: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// `log pi_tuned(y_t | y_<t) - log pi_base(y_t | y_<t)` under teacher forcing.
pub fn delta_logp(base: &PolicyParams, tuned: &PolicyParams, seq: &TokenSequence) -> Result<DeltaLogp> {
    base.same_shape(tuned)?;
    let a = token_logprobs(base, seq)?;
    let b = token_logprobs(tuned, seq)?;
    let positions: Vec<PositionDelta> = a
        .iter()
        .zip(&b)
        .zip(&seq.modality)
        .enumerate()
        .map(|(position, ((x, y), &modality))| PositionDelta {
            position,
            modality,
            delta: y - x,
        })
        .collect();
    let pick = |m: Modality| mean(positions.iter().filter(|d| d.modality == m).map(|d| d.delta));
    Ok(DeltaLogp {
        mean_text: pick(Modality::Text),
        mean_speech: pick(Modality::Speech),
        mean_all: mean(positions.iter().map(|d| d.delta)),
        positions,
    })
}
