//! Diversity and judge-human agreement statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divide by n).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Pearson correlation; `None` if either side is constant or fewer than two
/// points are given.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Ok(None);
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_id: BTreeMap<String, f64>,
    /// Mean of the per-ID variances.
    pub mean: f64,
}

/// Within-ID population variance of repeated-sample scores.
pub fn per_id_variance(samples: &[(String, f64)]) -> Result<DiversityReport> {
    if samples.is_empty() {
        return Err(Error::Empty("score list"));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (id, x) in samples {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("score {x} for {id}")));
        }
        groups.entry(id.clone()).or_default().push(*x);
    }
    let per_id: BTreeMap<String, f64> = groups
        .into_iter()
        .map(|(id, xs)| (id, population_variance(&xs)))
        .collect();
    let mean = per_id.values().sum::<f64>() / per_id.len() as f64;
    Ok(DiversityReport { per_id, mean })
}

/// One scored sample: judge scores and the mean human score on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSample {
    pub id: String,
    pub judge_semantic: f64,
    pub judge_acoustic: f64,
    pub human_semantic: f64,
    pub human_acoustic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAgreement {
    pub pearson: Option<f64>,
    /// Mean over IDs of the within-ID Spearman correlation.
    pub intra_id_spearman: Option<f64>,
    pub mae: f64,
    /// Fraction of samples with `|judge - human| <= 1`.
    pub pass_rate_le1: f64,
    /// Mean of `judge - human`.
    pub bias: f64,
    /// IDs whose Spearman correlation was undefined (one sample or a
    /// constant side) and so left out of the mean.
    pub ids_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_samples: usize,
    pub n_ids: usize,
    pub semantic: AxisAgreement,
    pub acoustic: AxisAgreement,
}

fn axis(samples: &[AgreementSample], pick: fn(&AgreementSample) -> (f64, f64)) -> Result<AxisAgreement> {
    let pairs: Vec<(f64, f64)> = samples.iter().map(pick).collect();
    let judge: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let human: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(j, h)| j - h).collect();

    let mut by_id: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (s, (j, h)) in samples.iter().zip(&pairs) {
        let e = by_id.entry(s.id.as_str()).or_default();
        e.0.push(*j);
        e.1.push(*h);
    }
    let mut rhos = Vec::new();
    let mut ids_skipped = 0;
    for (j, h) in by_id.values() {
        match spearman(j, h)? {
            Some(r) => rhos.push(r),
            None => ids_skipped += 1,
        }
    }
    Ok(AxisAgreement {
        pearson: pearson(&judge, &human)?,
        intra_id_spearman: (!rhos.is_empty()).then(|| mean(&rhos)),
        mae: diffs.iter().map(|d| d.abs()).sum::<f64>() / n,
        pass_rate_le1: diffs.iter().filter(|d| d.abs() <= 1.0).count() as f64 / n,
        bias: diffs.iter().sum::<f64>() / n,
        ids_skipped,
    })
}

pub fn agreement(samples: &[AgreementSample]) -> Result<AgreementReport> {
    if samples.is_empty() {
        return Err(Error::Empty("agreement samples"));
    }
    for s in samples {
        let vals = [s.judge_semantic, s.judge_acoustic, s.human_semantic, s.human_acoustic];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("score for {}", s.id)));
        }
    }
    let n_ids = samples
        .iter()
        .map(|s| s.id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(AgreementReport {
        n_samples: samples.len(),
        n_ids,
        semantic: axis(samples, |s| (s.judge_semantic, s.human_semantic))?,
        acoustic: axis(samples, |s| (s.judge_acoustic, s.human_acoustic))?,
    })
}
