use thiserror::Error;

/// Errors raised by the training and analysis primitives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("token id {token} is outside the vocabulary (size {vocab})")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("token {token} at response position {position} does not match its {modality} tag")]
    ModalityMismatch {
        token: u32,
        position: usize,
        modality: &'static str,
    },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("mask index {index} is out of range for a response of length {len}")]
    MaskOutOfRange { index: usize, len: usize },

    #[error("behavior policy assigns zero probability to the sampled token at position {position} of member {member}")]
    ZeroBehaviorProbability { member: usize, position: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("no target answer registered for prompt {0}")]
    MissingTarget(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
