use serde::{Deserialize, Serialize};

use super::vocab::{Modality, TokenId, Vocabulary};
use crate::error::{Error, Result};

/// A prompt plus a generated (or demonstrated) response with per-position
/// modality tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
    pub modality: Vec<Modality>,
    /// Set when generation hit the length cap before EOS.
    #[serde(default)]
    pub truncated: bool,
}

impl TokenSequence {
    pub fn new(prompt: Vec<TokenId>, response: Vec<TokenId>, modality: Vec<Modality>) -> Self {
        Self {
            prompt,
            response,
            modality,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.modality.len() != self.response.len() {
            return Err(Error::InvalidSequence(format!(
                "modality has {} tags for {} response tokens",
                self.modality.len(),
                self.response.len()
            )));
        }
        for &t in &self.prompt {
            vocab.check(t)?;
        }
        for (position, (&token, &m)) in self.response.iter().zip(&self.modality).enumerate() {
            vocab.check(token)?;
            if !vocab.admits(m, token) {
                return Err(Error::ModalityMismatch {
                    token,
                    position,
                    modality: m.name(),
                });
            }
        }
        Ok(())
    }

    /// I_T: response positions tagged text.
    pub fn text_positions(&self) -> Vec<usize> {
        self.positions_of(Modality::Text)
    }

    /// I_S: response positions tagged speech.
    pub fn speech_positions(&self) -> Vec<usize> {
        self.positions_of(Modality::Speech)
    }

    pub fn positions_of(&self, m: Modality) -> Vec<usize> {
        self.modality
            .iter()
            .enumerate()
            .filter_map(|(i, &tag)| (tag == m).then_some(i))
            .collect()
    }

    /// Non-special tokens at text positions, in order.
    pub fn text_stream(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        self.stream(vocab, Modality::Text)
    }

    /// Non-special tokens at speech positions, in order.
    pub fn speech_stream(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        self.stream(vocab, Modality::Speech)
    }

    fn stream(&self, vocab: &Vocabulary, m: Modality) -> Vec<TokenId> {
        self.response
            .iter()
            .zip(&self.modality)
            .filter(|(&t, &tag)| tag == m && !vocab.is_special(t))
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Which response positions a score or surrogate covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskRule {
    All,
    TextOnly,
}

impl MaskRule {
    pub fn covers(self, m: Modality) -> bool {
        match self {
            MaskRule::All => true,
            MaskRule::TextOnly => m == Modality::Text,
        }
    }

    pub fn positions(self, seq: &TokenSequence) -> Vec<usize> {
        match self {
            MaskRule::All => (0..seq.len()).collect(),
            MaskRule::TextOnly => seq.text_positions(),
        }
    }
}
