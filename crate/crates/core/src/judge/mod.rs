//! Simulated two-axis judge, its synthetic task, and preference pairs.

mod audit;
mod pairs;
mod score;
mod task;

pub use audit::{audit_pool, audit_scores, AuditSample, DEFAULT_AUDIT_MAX_RATE};
pub use pairs::{build_preference_pair, PreferencePair};
pub use score::{
    acoustic_score, exact_match_fraction, judge, score_rollout_group, semantic_score, style_tv,
    utility, JudgeConfig, JudgeNoise, JudgeScore, RewardSource, SyntheticJudge, LIKERT_MAX,
    LIKERT_MIN,
};
pub use task::{TaskConfig, TaskPrompt, TaskSpec};
