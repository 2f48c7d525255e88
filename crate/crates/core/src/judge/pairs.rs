//! Preference-pair construction from scored candidates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::score::{utility, JudgeConfig, JudgeScore};
use crate::error::{Error, Result};
use crate::seqmodel::{TokenId, TokenSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<TokenId>,
    pub chosen: TokenSequence,
    pub rejected: TokenSequence,
    pub chosen_score: JudgeScore,
    pub rejected_score: JudgeScore,
    pub utility_gap: f64,
}

/// Best candidate first: higher utility, then higher semantic, then higher
/// acoustic, then lower index.
fn better(a: (usize, f64, &JudgeScore), b: (usize, f64, &JudgeScore)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(b.2.semantic.total_cmp(&a.2.semantic))
        .then(b.2.acoustic.total_cmp(&a.2.acoustic))
        .then(a.0.cmp(&b.0))
}

/// Worst candidate first: lower utility, then lower semantic, then lower
/// acoustic, then higher index.
fn worse(a: (usize, f64, &JudgeScore), b: (usize, f64, &JudgeScore)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.2.semantic.total_cmp(&b.2.semantic))
        .then(a.2.acoustic.total_cmp(&b.2.acoustic))
        .then(b.0.cmp(&a.0))
}

/// Returns `None` when the best-worst utility gap is below the margin.
pub fn build_preference_pair(
    candidates: &[(TokenSequence, JudgeScore)],
    cfg: &JudgeConfig,
) -> Result<Option<PreferencePair>> {
    if candidates.len() < 2 {
        return Err(Error::Config(format!(
            "pair construction needs at least two candidates, got {}",
            candidates.len()
        )));
    }
    let prompt = &candidates[0].0.prompt;
    if candidates.iter().any(|(c, _)| &c.prompt != prompt) {
        return Err(Error::InvalidSequence(
            "pair candidates must share one prompt".into(),
        ));
    }
    let keyed: Vec<(usize, f64, &JudgeScore)> = candidates
        .iter()
        .enumerate()
        .map(|(i, (_, s))| (i, utility(s, cfg.pair_lambda), s))
        .collect();
    let best = *keyed.iter().min_by(|a, b| better(**a, **b)).expect("nonempty");
    let worst = *keyed.iter().min_by(|a, b| worse(**a, **b)).expect("nonempty");
    let gap = best.1 - worst.1;
    if gap < cfg.margin_delta || best.0 == worst.0 {
        return Ok(None);
    }
    Ok(Some(PreferencePair {
        prompt: prompt.clone(),
        chosen: candidates[best.0].0.clone(),
        rejected: candidates[worst.0].0.clone(),
        chosen_score: *best.2,
        rejected_score: *worst.2,
        utility_gap: gap,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::Modality;

    fn cand(tag: u32, semantic: f64, acoustic: f64) -> (TokenSequence, JudgeScore) {
        (
            TokenSequence::new(vec![28, 0], vec![tag], vec![Modality::Text]),
            JudgeScore {
                semantic,
                acoustic,
                acoustic_floor: false,
            },
        )
    }

    #[test]
    fn picks_extremes_with_margin() {
        let cfg = JudgeConfig::default();
        let pool = vec![cand(0, 3.0, 3.0), cand(1, 5.0, 4.0), cand(2, 1.0, 2.0)];
        let p = build_preference_pair(&pool, &cfg).unwrap().unwrap();
        assert_eq!(p.chosen.response, vec![1]);
        assert_eq!(p.rejected.response, vec![2]);
        assert!((p.utility_gap - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_gap_yields_nothing() {
        let cfg = JudgeConfig::default();
        let pool = vec![cand(0, 3.0, 3.0), cand(1, 3.2, 3.2)];
        assert!(build_preference_pair(&pool, &cfg).unwrap().is_none());
    }

    #[test]
    fn utility_ties_break_by_semantic() {
        let cfg = JudgeConfig::default();
        // utilities 4.0, 4.0, 1.0
        let pool = vec![cand(0, 3.0, 5.0), cand(1, 5.0, 3.0), cand(2, 1.0, 1.0)];
        let p = build_preference_pair(&pool, &cfg).unwrap().unwrap();
        assert_eq!(p.chosen.response, vec![1]);
    }

    #[test]
    fn identical_candidates_never_pair_with_themselves() {
        let cfg = JudgeConfig {
            margin_delta: 0.0,
            ..JudgeConfig::default()
        };
        let pool = vec![cand(0, 3.0, 3.0), cand(1, 3.0, 3.0)];
        let p = build_preference_pair(&pool, &cfg).unwrap().unwrap();
        assert_eq!(p.chosen.response, vec![0]);
        assert_eq!(p.rejected.response, vec![1]);
    }

    #[test]
    fn rejects_single_candidate() {
        assert!(build_preference_pair(&[cand(0, 1.0, 1.0)], &JudgeConfig::default()).is_err());
    }
}
