use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `W_o(GELU(W_g x) * W_l x)`: three weight matrices per block.
    GatedGelu,
    /// `W_o(ReLU(W_i x))`.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::GatedGelu => "gated_gelu",
            Activation::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ff: usize,
    pub activation: Activation,
    /// Number of relative-position buckets.
    pub relpos_num_embeddings: usize,
    /// Offset beyond which all relative positions share the terminal bucket.
    pub relpos_offset: usize,
    pub tie_decoder_embedding: bool,
    pub vocab_size: usize,
    pub max_length: usize,
    pub dropout: f64,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale model: 2 encoder / 1 decoder layers, width 64.
    pub fn toy() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 1,
            d_ff: 128,
            activation: Activation::GatedGelu,
            relpos_num_embeddings: 32,
            relpos_offset: 128,
            tie_decoder_embedding: false,
            vocab_size: Vocabulary::new().size(),
            max_length: 512,
            dropout: 0.1,
            seed: 42,
        }
    }

    /// The 36/36-layer, width-768 reference configuration.
    pub fn baseline() -> Self {
        Self {
            d_model: 768,
            n_heads: 12,
            n_encoder_layers: 36,
            n_decoder_layers: 36,
            d_ff: 3072,
            ..Self::toy()
        }
    }

    pub fn ankh_base() -> Self {
        Self {
            n_encoder_layers: 48,
            n_decoder_layers: 24,
            relpos_num_embeddings: 64,
            ..Self::baseline()
        }
    }

    pub fn ankh_large() -> Self {
        Self {
            d_model: 1536,
            n_heads: 16,
            d_ff: 3840,
            ..Self::ankh_base()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "baseline" => Some(Self::baseline()),
            "ankh_base" => Some(Self::ankh_base()),
            "ankh_large" => Some(Self::ankh_large()),
            _ => None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("d_model, n_heads and d_ff must be at least 1");
        }
        if self.d_model % self.n_heads != 0 {
            return fail("d_model must be divisible by n_heads");
        }
        if self.relpos_num_embeddings < 2 {
            return fail("relpos_num_embeddings must be at least 2");
        }
        if self.relpos_offset == 0 {
            return fail("relpos_offset must be at least 1");
        }
        if self.vocab_size < Vocabulary::new().size() {
            return fail("vocab_size smaller than the protein vocabulary");
        }
        if self.max_length == 0 {
            return fail("max_length must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Flat key/value view used in checkpoint headers.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(format!("config.{k}"), v);
        };
        put("d_model", self.d_model.to_string());
        put("n_heads", self.n_heads.to_string());
        put("n_encoder_layers", self.n_encoder_layers.to_string());
        put("n_decoder_layers", self.n_decoder_layers.to_string());
        put("d_ff", self.d_ff.to_string());
        put("activation", self.activation.name().to_string());
        put("relpos_num_embeddings", self.relpos_num_embeddings.to_string());
        put("relpos_offset", self.relpos_offset.to_string());
        put("tie_decoder_embedding", self.tie_decoder_embedding.to_string());
        put("vocab_size", self.vocab_size.to_string());
        put("max_length", self.max_length.to_string());
        // Round-trip exact: Rust prints the shortest representation.
        put("dropout", format!("{:?}", self.dropout));
        put("seed", self.seed.to_string());
        m
    }

    pub fn from_kv(m: &BTreeMap<String, String>) -> Result<Self, ModelError> {
        fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<T, ModelError> {
            let raw = m
                .get(&format!("config.{k}"))
                .ok_or_else(|| ModelError::MalformedHeader(format!("missing config.{k}")))?;
            raw.parse()
                .map_err(|_| ModelError::MalformedHeader(format!("bad value for config.{k}: {raw:?}")))
        }
        let activation = match get::<String>(m, "activation")?.as_str() {
            "gated_gelu" => Activation::GatedGelu,
            "relu" => Activation::Relu,
            other => {
                return Err(ModelError::MalformedHeader(format!(
                    "unknown activation {other:?}"
                )))
            }
        };
        let cfg = Self {
            d_model: get(m, "d_model")?,
            n_heads: get(m, "n_heads")?,
            n_encoder_layers: get(m, "n_encoder_layers")?,
            n_decoder_layers: get(m, "n_decoder_layers")?,
            d_ff: get(m, "d_ff")?,
            activation,
            relpos_num_embeddings: get(m, "relpos_num_embeddings")?,
            relpos_offset: get(m, "relpos_offset")?,
            tie_decoder_embedding: get(m, "tie_decoder_embedding")?,
            vocab_size: get(m, "vocab_size")?,
            max_length: get(m, "max_length")?,
            dropout: get(m, "dropout")?,
            seed: get(m, "seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
