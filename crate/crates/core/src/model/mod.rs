//! The sentence-labeling network: embeddings (token, position, segment and
//! optional per-word phone means), a pre-norm transformer encoder, mean
//! pooling over sentence spans and a two-way softmax classifier.

mod checkpoint;
mod network;
mod params;
mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use network::{pool_sentences, Mode};
pub use params::{LayerParams, Params};
pub use tensor::Tensor;

/// Which hidden states feed the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One prediction per sentence span from mean-pooled token states.
    #[default]
    Sentence,
    /// One prediction per input from the `[CLS]` state (cross-segment baseline).
    Cls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub phone_vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
    pub use_phone: bool,
    #[serde(default)]
    pub head: Head,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            phone_vocab_size: 0,
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            max_seq_len: 512,
            dropout_rate: 0.1,
            use_phone: false,
            head: Head::Sentence,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::config("d_ff must be positive"));
        }
        if self.max_seq_len < 8 {
            return Err(Error::config("max_seq_len must be at least 8"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must lie in [0, 1)"));
        }
        if self.use_phone && self.phone_vocab_size == 0 {
            return Err(Error::config("use_phone requires phone_vocab_size > 0"));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Input for one encoder call of the sentence-labeling model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowInput {
    /// Position 0 holds `[CLS]`.
    pub token_ids: Vec<u32>,
    /// Half-open token ranges, one per sentence, in order.
    pub sentence_spans: Vec<(usize, usize)>,
    /// For every token, the phone ids of the word it came from.
    pub phones: Option<Vec<Vec<u32>>>,
}

impl WindowInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 1;
        for &(a, b) in &self.sentence_spans {
            if a < prev_end || b <= a || b > self.token_ids.len() {
                return Err(Error::input(format!(
                    "invalid sentence span ({a}, {b}) for {} tokens",
                    self.token_ids.len()
                )));
            }
            prev_end = b;
        }
        if let Some(p) = &self.phones {
            if p.len() != self.token_ids.len() {
                return Err(Error::input("phone plan length differs from token count"));
            }
        }
        Ok(())
    }
}

/// Input for one cross-segment call: `[CLS] left [SEP] right`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairInput {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub phones: Option<Vec<Vec<u32>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceProbs {
    pub probs: Vec<f64>,
}

/// All trainable parameters together with the architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct SegModel {
    pub config: ModelConfig,
    pub params: Params,
}

impl SegModel {
    /// Truncated-normal (σ = 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(SegModel { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(SegModel { config, params })
    }

    pub fn zero_grads(&self) -> Params {
        self.params.zeros_like()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        checkpoint::load(path.as_ref())
    }
}

#[cfg(test)]
pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        phone_vocab_size: 5,
        d_model: 8,
        n_layers: 1,
        n_heads: 1,
        d_ff: 16,
        max_seq_len: 16,
        dropout_rate: 0.1,
        use_phone: false,
        head: Head::Sentence,
    }
}
