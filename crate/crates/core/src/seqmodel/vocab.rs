use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Which stream a response position belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Text,
    Speech,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "TEXT",
            Modality::Speech => "SPEECH",
        }
    }
}

/// Token alphabet: text ids first, then speech ids, then BOS and EOS.
///
/// ```text
/// [0, V_T)            text
/// [V_T, V_T + V_S)    speech
/// V_T + V_S           BOS
/// V_T + V_S + 1       EOS
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub text_size: usize,
    pub speech_size: usize,
}

impl Vocabulary {
    pub fn new(text_size: usize, speech_size: usize) -> Result<Self> {
        if text_size < 2 || speech_size < 2 {
            return Err(Error::Config(format!(
                "vocabulary needs at least 2 text and 2 speech tokens (got {text_size}, {speech_size})"
            )));
        }
        Ok(Self {
            text_size,
            speech_size,
        })
    }

    pub fn size(&self) -> usize {
        self.text_size + self.speech_size + 2
    }

    pub fn bos(&self) -> TokenId {
        (self.text_size + self.speech_size) as TokenId
    }

    pub fn eos(&self) -> TokenId {
        self.bos() + 1
    }

    pub fn text_token(&self, i: usize) -> TokenId {
        debug_assert!(i < self.text_size);
        i as TokenId
    }

    pub fn speech_token(&self, i: usize) -> TokenId {
        debug_assert!(i < self.speech_size);
        (self.text_size + i) as TokenId
    }

    /// Index of a speech token within the speech alphabet.
    pub fn speech_index(&self, token: TokenId) -> Option<usize> {
        let t = token as usize;
        (self.text_size..self.text_size + self.speech_size)
            .contains(&t)
            .then(|| t - self.text_size)
    }

    pub fn is_text(&self, token: TokenId) -> bool {
        (token as usize) < self.text_size
    }

    pub fn is_speech(&self, token: TokenId) -> bool {
        self.speech_index(token).is_some()
    }

    pub fn is_special(&self, token: TokenId) -> bool {
        token == self.bos() || token == self.eos()
    }

    pub fn contains(&self, token: TokenId) -> bool {
        (token as usize) < self.size()
    }

    /// Checks that `token` may appear at a position tagged `modality`.
    pub fn admits(&self, modality: Modality, token: TokenId) -> bool {
        self.is_special(token)
            || match modality {
                Modality::Text => self.is_text(token),
                Modality::Speech => self.is_speech(token),
            }
    }

    pub fn check(&self, token: TokenId) -> Result<()> {
        if self.contains(token) {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                token,
                vocab: self.size(),
            })
        }
    }
}

/// Interleaving pattern of the generated stream: `text_run` text slots
/// followed by `speech_run` speech slots, repeated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub text_run: usize,
    pub speech_run: usize,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            text_run: 1,
            speech_run: 2,
        }
    }
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        if self.text_run == 0 || self.speech_run == 0 {
            return Err(Error::Config(
                "schema runs must both be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn cycle_len(&self) -> usize {
        self.text_run + self.speech_run
    }

    /// Modality of response position `t`.
    pub fn slot(&self, t: usize) -> Modality {
        if t % self.cycle_len() < self.text_run {
            Modality::Text
        } else {
            Modality::Speech
        }
    }
}
