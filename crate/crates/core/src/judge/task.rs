//! Synthetic ground truth for the judge.
//!
//! Semantics: every non-terminal text token has a fixed successor, and the
//! successors form an in-tree rooted at a terminal token. A prompt names a
//! starting token; its target answer is the walk from there down to (and
//! including) the terminal token. Because the previous text token is always
//! inside the policy's context window, the answers are learnable.
//!
//! Acoustics: the reference speaking style is a deterministic cycle over a
//! few speech tokens; its bigram distribution puts mass `1/C` on each
//! consecutive pair of the cycle.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::seqmodel::{Modality, ModelConfig, Schema, TokenId, TokenSequence, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub seed: u64,
    /// Number of speech tokens in the reference style cycle.
    pub style_cycle: usize,
    pub min_answer_len: usize,
    pub max_answer_len: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            style_cycle: 4,
            min_answer_len: 4,
            max_answer_len: 7,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.style_cycle < 2 || self.style_cycle > model.speech_vocab {
            return Err(Error::Config(format!(
                "task.style_cycle must lie in [2, {}]",
                model.speech_vocab
            )));
        }
        if self.min_answer_len == 0 || self.max_answer_len < self.min_answer_len {
            return Err(Error::Config(
                "task answer lengths must satisfy 1 <= min <= max".into(),
            ));
        }
        // one node per depth below min, at least one per depth in [min, max], plus the terminal
        if self.max_answer_len + 1 > model.text_vocab {
            return Err(Error::Config(format!(
                "task.max_answer_len {} needs at least {} text tokens",
                self.max_answer_len,
                self.max_answer_len + 1
            )));
        }
        let longest = demo_len(&model.schema, self.max_answer_len);
        if longest > model.max_len {
            return Err(Error::Config(format!(
                "longest demonstration ({longest} tokens) exceeds model.max_len"
            )));
        }
        Ok(())
    }
}

/// Response length of a demonstration with `answer_len` text tokens (one
/// text run per answer token, speech runs after each, then EOS).
fn demo_len(schema: &Schema, answer_len: usize) -> usize {
    let cycles = answer_len.div_ceil(schema.text_run);
    cycles * schema.cycle_len() + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub id: usize,
    pub tokens: Vec<TokenId>,
    pub target: Vec<TokenId>,
    /// Offset into the style cycle where the demonstration's speech starts.
    pub speech_phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub vocab: Vocabulary,
    pub schema: Schema,
    pub prompts: Vec<TaskPrompt>,
    /// Successor of each text token; `None` for the terminal.
    pub successor: Vec<Option<TokenId>>,
    pub terminal: TokenId,
    pub style_cycle: Vec<TokenId>,
    /// Reference bigram distribution over speech-token pairs, row-major
    /// `V_S x V_S` by speech index.
    pub style_bigrams: Vec<f64>,
}

impl TaskSpec {
    pub fn generate(model: &ModelConfig, cfg: &TaskConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate(model)?;
        let vocab = model.vocab();
        let mut rng = stream_rng(cfg.seed, Stream::Task, &[]);

        let mut text: Vec<TokenId> = (0..vocab.text_size).map(|i| vocab.text_token(i)).collect();
        text.shuffle(&mut rng);
        let terminal = text[0];
        let others = &text[1..];

        // depths 1..min-1 get one node each, the rest spread over [min, max]
        let mut depth_of: HashMap<TokenId, usize> = HashMap::new();
        let mut by_depth: Vec<Vec<TokenId>> = vec![Vec::new(); cfg.max_answer_len + 1];
        by_depth[0].push(terminal);
        let span = cfg.max_answer_len - cfg.min_answer_len + 1;
        for (k, &tok) in others.iter().enumerate() {
            let d = if k + 1 < cfg.min_answer_len {
                k + 1
            } else {
                cfg.min_answer_len + (k + 1 - cfg.min_answer_len) % span
            };
            depth_of.insert(tok, d);
            by_depth[d].push(tok);
        }

        let mut successor = vec![None; vocab.text_size];
        // visit in id order so parent draws are reproducible
        for tok in 0..vocab.text_size as TokenId {
            if let Some(&d) = depth_of.get(&tok) {
                let parents = &by_depth[d - 1];
                successor[tok as usize] = Some(parents[rng.random_range(0..parents.len())]);
            }
        }

        let mut starts: Vec<TokenId> = depth_of
            .iter()
            .filter(|(_, &d)| d >= cfg.min_answer_len)
            .map(|(&t, _)| t)
            .collect();
        starts.sort_unstable();

        let mut speech: Vec<TokenId> = (0..vocab.speech_size).map(|i| vocab.speech_token(i)).collect();
        speech.shuffle(&mut rng);
        let style_cycle = speech[..cfg.style_cycle].to_vec();
        let c = style_cycle.len();
        let mut style_bigrams = vec![0.0; vocab.speech_size * vocab.speech_size];
        for i in 0..c {
            let a = vocab.speech_index(style_cycle[i]).expect("speech token");
            let b = vocab.speech_index(style_cycle[(i + 1) % c]).expect("speech token");
            style_bigrams[a * vocab.speech_size + b] += 1.0 / c as f64;
        }

        let prompts = starts
            .iter()
            .enumerate()
            .map(|(id, &start)| {
                let mut target = Vec::new();
                let mut cur = start;
                while let Some(next) = successor[cur as usize] {
                    target.push(next);
                    cur = next;
                }
                TaskPrompt {
                    id,
                    tokens: vec![vocab.bos(), start],
                    target,
                    speech_phase: id % c,
                }
            })
            .collect();

        let spec = Self {
            vocab,
            schema: model.schema,
            prompts,
            successor,
            terminal,
            style_cycle,
            style_bigrams,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts.is_empty() {
            return Err(Error::Config("task has no prompts".into()));
        }
        if self.prompts.iter().any(|p| p.target.is_empty()) {
            return Err(Error::Config("every target answer must be nonempty".into()));
        }
        let total: f64 = self.style_bigrams.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "reference bigram distribution sums to {total}"
            )));
        }
        Ok(())
    }

    pub fn prompt(&self, id: usize) -> Result<&TaskPrompt> {
        self.prompts.get(id).ok_or(Error::MissingTarget(id))
    }

    /// Looks up the prompt entry whose tokens equal `prompt`.
    pub fn find_prompt(&self, prompt: &[TokenId]) -> Option<&TaskPrompt> {
        self.prompts.iter().find(|p| p.tokens == prompt)
    }

    /// Ground-truth demonstration: the target answer interleaved with
    /// reference-style speech, closed by EOS at the next text slot.
    pub fn oracle_demo(&self, id: usize) -> Result<TokenSequence> {
        let p = self.prompt(id)?;
        let mut response = Vec::new();
        let mut modality = Vec::new();
        let mut text = p.target.iter();
        let mut phase = p.speech_phase;
        let c = self.style_cycle.len();
        let mut t = 0;
        loop {
            let slot = self.schema.slot(t);
            let tok = match slot {
                Modality::Text => match text.next() {
                    Some(&tok) => tok,
                    None => {
                        response.push(self.vocab.eos());
                        modality.push(slot);
                        break;
                    }
                },
                Modality::Speech => {
                    let tok = self.style_cycle[phase % c];
                    phase += 1;
                    tok
                }
            };
            response.push(tok);
            modality.push(slot);
            t += 1;
        }
        Ok(TokenSequence::new(p.tokens.clone(), response, modality))
    }
}
