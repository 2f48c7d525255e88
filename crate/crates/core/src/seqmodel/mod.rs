//! Mixed-modality token space and the toy autoregressive policy.

pub mod checkpoint;
mod forward;
mod params;
mod sampling;
mod sequence;
mod vocab;

pub use forward::{
    backprop, context_window, forward_position, forward_sequence, grad_of_scalar, log_softmax,
    logprob_partitioned, token_logprobs, ConstantLoss, DifferentiableLoss, LossEval,
    PositionCache, SequenceForward, SequenceGrad,
};
pub use params::{Gradient, LayerSegment, ModelConfig, ParamLayout, PolicyParams, ReferenceSnapshot};
pub use sampling::{
    greedy_decode, nucleus_distribution, sample_group, sample_one, slot_allows, SamplingParams,
};
pub use sequence::{MaskRule, TokenSequence};
pub use vocab::{Modality, Schema, TokenId, Vocabulary};
