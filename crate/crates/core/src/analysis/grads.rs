//! Per-modality gradient decomposition and its geometry.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objectives::MaskedScore;
use crate::seqmodel::{grad_of_scalar, Gradient, PolicyParams, TokenSequence};

/// Gradients of the text-only and speech-only cross-entropy
/// (`-sum log pi` over I_T and I_S), each from its own backward pass.
pub fn grad_decompose(params: &PolicyParams, seq: &TokenSequence) -> Result<(Gradient, Gradient)> {
    let mut text = grad_of_scalar(params, &MaskedScore::new(seq, seq.text_positions())?)?;
    text.scale(-1.0);
    let mut speech = grad_of_scalar(params, &MaskedScore::new(seq, seq.speech_positions())?)?;
    speech.scale(-1.0);
    Ok((text, speech))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub layer: String,
    pub text_norm: f64,
    pub speech_norm: f64,
    /// Undefined when either gradient is zero.
    pub cosine: Option<f64>,
    /// `speech_norm / text_norm`; undefined when the text gradient is zero.
    pub ratio: Option<f64>,
}

impl Geometry {
    fn of(layer: &str, a: &[f64], b: &[f64]) -> Self {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let cosine = (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0));
        Self {
            layer: layer.to_string(),
            text_norm: na,
            speech_norm: nb,
            cosine,
            ratio: (na > 0.0).then(|| nb / na),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub layers: Vec<Geometry>,
    pub global: Geometry,
}

pub fn grad_geometry(text: &Gradient, speech: &Gradient) -> GradReport {
    let layers = text
        .layout
        .segments
        .iter()
        .map(|seg| Geometry::of(&seg.name, &text.data[seg.range()], &speech.data[seg.range()]))
        .collect();
    GradReport {
        layers,
        global: Geometry::of("global", &text.data, &speech.data),
    }
}

pub fn grad_report(params: &PolicyParams, seq: &TokenSequence) -> Result<GradReport> {
    let (t, s) = grad_decompose(params, seq)?;
    Ok(grad_geometry(&t, &s))
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = xs.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Field-wise mean over several reports; undefined entries are skipped.
pub fn mean_report(reports: &[GradReport]) -> Option<GradReport> {
    let first = reports.first()?;
    let avg = |pick: &dyn Fn(&GradReport) -> &Geometry| {
        let n = reports.len() as f64;
        Geometry {
            layer: pick(first).layer.clone(),
            text_norm: reports.iter().map(|r| pick(r).text_norm).sum::<f64>() / n,
            speech_norm: reports.iter().map(|r| pick(r).speech_norm).sum::<f64>() / n,
            cosine: mean_defined(reports.iter().map(|r| pick(r).cosine)),
            ratio: mean_defined(reports.iter().map(|r| pick(r).ratio)),
        }
    };
    Some(GradReport {
        layers: (0..first.layers.len())
            .map(|i| avg(&|r: &GradReport| &r.layers[i]))
            .collect(),
        global: avg(&|r: &GradReport| &r.global),
    })
}
