//! Diagnostics: gradient geometry, log-probability shifts, diversity,
//! judge agreement, and side-by-side significance.

mod dlogp;
mod grads;
mod signtest;
mod stats;

pub use dlogp::{delta_logp, DeltaLogp, PositionDelta};
pub use grads::{grad_decompose, grad_geometry, grad_report, mean_report, Geometry, GradReport};
pub use signtest::{majority_vote, sign_test, summarize_sbs, Outcome, SbsSummary, Vote};
pub use stats::{
    agreement, average_ranks, pearson, per_id_variance, population_variance, spearman,
    AgreementReport, AgreementSample, AxisAgreement, DiversityReport,
};
