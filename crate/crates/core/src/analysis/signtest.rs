//! Side-by-side preference aggregation and the two-sided sign test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rater's verdict; `A` is the system under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Vote {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

/// Strict majority of all votes (ties count toward the total); otherwise a tie.
pub fn majority_vote(votes: &[Vote]) -> Result<Outcome> {
    if votes.is_empty() {
        return Err(Error::Empty("vote list"));
    }
    let a = votes.iter().filter(|&&v| v == Vote::A).count();
    let b = votes.iter().filter(|&&v| v == Vote::B).count();
    Ok(if 2 * a > votes.len() {
        Outcome::Win
    } else if 2 * b > votes.len() {
        Outcome::Loss
    } else {
        Outcome::Tie
    })
}

/// Exact up to this many decisive items; log-space summation beyond.
const EXACT_LIMIT: u64 = 120;

/// `P[X >= k]` for `X ~ Binomial(n, 1/2)`.
fn upper_tail(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n <= EXACT_LIMIT {
        let mut c: u128 = 1;
        let mut total: u128 = 0;
        for i in 0..=n {
            if i >= k {
                total += c;
            }
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        // 2^n as f64 is exact; the division rounds once
        return total as f64 / 2f64.powi(n as i32);
    }
    upper_tail_log(n, k)
}

fn upper_tail_log(n: u64, k: u64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let mut log_c = 0.0;
    let mut terms = Vec::with_capacity((n - k + 1) as usize);
    for i in 0..=n {
        if i >= k {
            terms.push(log_c - n as f64 * ln2);
        }
        if i < n {
            log_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m.exp() * terms.iter().map(|t| (t - m).exp()).sum::<f64>()
}

/// Two-sided exact sign test on wins and losses (ties dropped):
/// `p = min(1, 2 * min(P[X >= W], P[X >= L]))`.
pub fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let tail = upper_tail(n, wins).min(upper_tail(n, losses));
    (2.0 * tail).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsSummary {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub p_value: f64,
}

/// Aggregates per-item vote lists into outcomes and a sign-test summary.
pub fn summarize_sbs(items: &[Vec<Vote>]) -> Result<SbsSummary> {
    let mut s = SbsSummary {
        wins: 0,
        losses: 0,
        ties: 0,
        p_value: 1.0,
    };
    for votes in items {
        match majority_vote(votes)? {
            Outcome::Win => s.wins += 1,
            Outcome::Loss => s.losses += 1,
            Outcome::Tie => s.ties += 1,
        }
    }
    s.p_value = sign_test(s.wins, s.losses);
    Ok(s)
}
