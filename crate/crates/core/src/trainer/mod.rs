//! Single-stage training loop: rollouts, judging, gating, update,
//! reference management and evaluation, plus baseline recipes.

mod config;
mod eval;
mod pairs;
mod run;

pub use config::{Recipe, TrainConfig};
pub use eval::{all_prompts, evaluate_policy, EvalMetrics};
pub use pairs::{build_pairs, PairSummary};
pub use run::{
    base_policy, run_experiment, train_loop, train_loop_with, RunArtifact, StepRecord, Trainer,
};
