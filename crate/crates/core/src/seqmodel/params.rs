use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{Schema, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Architecture and generation hyperparameters of the toy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub text_vocab: usize,
    pub speech_vocab: usize,
    /// Context window W (previous tokens visible to the predictor).
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub max_len: usize,
    /// Std of the random embedding table at init.
    pub embed_init_scale: f64,
    /// Std of the random hidden layer at init. The output layer starts at zero.
    pub hidden_init_scale: f64,
    pub schema: Schema,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text_vocab: 12,
            speech_vocab: 16,
            window: 4,
            embed_dim: 8,
            hidden: 32,
            max_len: 48,
            embed_init_scale: 1.0,
            hidden_init_scale: 0.1,
            schema: Schema::default(),
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn vocab(&self) -> Vocabulary {
        Vocabulary {
            text_size: self.text_vocab,
            speech_size: self.speech_vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Vocabulary::new(self.text_vocab, self.speech_vocab)?;
        self.schema.validate()?;
        if self.window == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "model.window, model.embed_dim and model.hidden must be positive".into(),
            ));
        }
        if self.max_len == 0 {
            return Err(Error::Config("model.max_len must be positive".into()));
        }
        if !(self.embed_init_scale >= 0.0 && self.hidden_init_scale >= 0.0) {
            return Err(Error::Config("init scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// One named, contiguous block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSegment {
    pub name: String,
    pub offset: usize,
    /// Row-major shape. Dense layers store their bias as the last column.
    pub shape: Vec<usize>,
}

impl LayerSegment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Segment table for [`PolicyParams`]: `embedding` (V x D), `hidden`
/// (H x (W*D + 1)) and `output` (V x (H + 1)).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<LayerSegment>,
}

impl ParamLayout {
    fn new(cfg: &ModelConfig) -> Self {
        let v = cfg.vocab().size();
        let shapes = [
            ("embedding", vec![v, cfg.embed_dim]),
            ("hidden", vec![cfg.hidden, cfg.window * cfg.embed_dim + 1]),
            ("output", vec![v, cfg.hidden + 1]),
        ];
        let mut offset = 0;
        let segments = shapes
            .into_iter()
            .map(|(name, shape)| {
                let seg = LayerSegment {
                    name: name.to_string(),
                    offset,
                    shape,
                };
                offset += seg.len();
                seg
            })
            .collect();
        Self { segments }
    }

    pub fn total(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn segment(&self, name: &str) -> Option<&LayerSegment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Full parameter vector of the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub config: ModelConfig,
    pub data: Vec<f64>,
}

impl PolicyParams {
    /// Zero output layer, random embedding and hidden layer seeded from
    /// `config.init_seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut data = vec![0.0; layout.total()];
        let mut rng = stream_rng(config.init_seed, Stream::Init, &[]);
        let mut fill = |seg: &LayerSegment, std: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            if std == 0.0 {
                return;
            }
            let normal = Normal::new(0.0, std).expect("finite std");
            for x in &mut data[seg.range()] {
                *x = normal.sample(rng);
            }
        };
        fill(&layout.segments[0], config.embed_init_scale, &mut rng);
        fill(&layout.segments[1], config.hidden_init_scale, &mut rng);
        Ok(Self {
            config: config.clone(),
            data,
        })
    }

    pub fn from_parts(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = config.layout().total();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "parameter vector has {} entries, layout expects {expected}",
                data.len()
            )));
        }
        let p = Self { config, data };
        p.check_finite()?;
        Ok(p)
    }

    pub fn vocab(&self) -> Vocabulary {
        self.config.vocab()
    }

    pub fn layout(&self) -> ParamLayout {
        self.config.layout()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!("parameter {i} is {}", self.data[i]))),
        }
    }

    pub fn same_shape(&self, other: &PolicyParams) -> Result<()> {
        let strip = |c: &ModelConfig| ModelConfig {
            init_seed: 0,
            embed_init_scale: 0.0,
            hidden_init_scale: 0.0,
            ..c.clone()
        };
        if strip(&self.config) != strip(&other.config) || self.data.len() != other.data.len() {
            return Err(Error::ShapeMismatch(
                "parameter sets differ in vocabulary or architecture".into(),
            ));
        }
        Ok(())
    }

    /// `self -= lr * grad`.
    pub fn descend(&mut self, grad: &Gradient, lr: f64) {
        debug_assert_eq!(grad.data.len(), self.data.len());
        for (p, g) in self.data.iter_mut().zip(&grad.data) {
            *p -= lr * g;
        }
    }

    /// Mutable view of the output layer (V rows of H weights plus bias).
    pub fn output_layer_mut(&mut self) -> &mut [f64] {
        let seg = self.layout().segments[2].clone();
        &mut self.data[seg.range()]
    }

    pub fn perturbed<R: Rng>(&self, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let data = self.data.iter().map(|x| x + normal.sample(rng)).collect();
        Self {
            config: self.config.clone(),
            data,
        }
    }
}

/// Immutable shared snapshot used for pi_ref and pi_old.
#[derive(Debug, Clone)]
pub struct ReferenceSnapshot(Arc<PolicyParams>);

impl ReferenceSnapshot {
    pub fn new(params: &PolicyParams) -> Self {
        Self(Arc::new(params.clone()))
    }

    pub fn params(&self) -> &PolicyParams {
        &self.0
    }
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl Gradient {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.total();
        Self {
            layout,
            data: vec![0.0; n],
        }
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.segment(name).map(|s| &self.data[s.range()])
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
