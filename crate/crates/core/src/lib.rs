//! Modality-aware preference optimization for interleaved text/speech
//! token sequences, at desk scale.

pub mod analysis;
pub mod config;
pub mod error;
pub mod gate;
pub mod judge;
pub mod objectives;
pub mod rng;
pub mod seqmodel;
pub mod trainer;

pub use error::{Error, Result};
