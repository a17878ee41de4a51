use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, ModelConfig, ModelError};
use crate::autograd::Tensor;

/// Storage precision for parameters. Computation is always `f64`; in
/// `Single` mode every stored value is rounded to the nearest `f32` so that
/// checkpoints reproduce parameters bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

/// Which half of the network a parameter belongs to. The token embedding and
/// the relative-bias table feed the encoder, so they count as encoder-side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Ones,
}

pub const EMBEDDING: &str = "shared.embedding";
pub const RELPOS_BIAS: &str = "shared.relpos_bias";
pub const LM_HEAD: &str = "decoder.lm_head";

fn attention_names(prefix: &str) -> [String; 4] {
    ["q", "k", "v", "o"].map(|p| format!("{prefix}.{p}"))
}

fn ffn_specs(config: &ModelConfig, prefix: &str) -> Vec<(String, Vec<usize>, Init)> {
    let (d, f) = (config.d_model, config.d_ff);
    let mut v = Vec::new();
    match config.activation {
        Activation::GatedGelu => {
            v.push((format!("{prefix}.ffn.wi_gate"), vec![d, f], Init::Normal));
            v.push((format!("{prefix}.ffn.wi_lin"), vec![d, f], Init::Normal));
        }
        Activation::Relu => v.push((format!("{prefix}.ffn.wi"), vec![d, f], Init::Normal)),
    }
    v.push((format!("{prefix}.ffn.wo"), vec![f, d], Init::Normal));
    v
}

/// Every parameter the config induces, in initialization order.
fn parameter_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.d_model;
    let mut specs = vec![
        (EMBEDDING.to_string(), vec![config.vocab_size, d], Init::Normal),
        (
            RELPOS_BIAS.to_string(),
            vec![config.relpos_num_embeddings, config.n_heads],
            Init::Normal,
        ),
    ];
    let attn = |specs: &mut Vec<(String, Vec<usize>, Init)>, prefix: String| {
        for n in attention_names(&prefix) {
            specs.push((n, vec![d, d], Init::Normal));
        }
    };
    for i in 0..config.n_encoder_layers {
        let p = format!("encoder.layer{i}");
        specs.push((format!("{p}.attn_norm"), vec![d], Init::Ones));
        attn(&mut specs, format!("{p}.attn"));
        specs.push((format!("{p}.ffn_norm"), vec![d], Init::Ones));
        specs.extend(ffn_specs(config, &p));
    }
    specs.push(("encoder.final_norm".into(), vec![d], Init::Ones));
    for i in 0..config.n_decoder_layers {
        let p = format!("decoder.layer{i}");
        specs.push((format!("{p}.self_norm"), vec![d], Init::Ones));
        attn(&mut specs, format!("{p}.self_attn"));
        specs.push((format!("{p}.cross_norm"), vec![d], Init::Ones));
        attn(&mut specs, format!("{p}.cross_attn"));
        specs.push((format!("{p}.ffn_norm"), vec![d], Init::Ones));
        specs.extend(ffn_specs(config, &p));
    }
    specs.push(("decoder.final_norm".into(), vec![d], Init::Ones));
    if !config.tie_decoder_embedding {
        specs.push((LM_HEAD.to_string(), vec![d, config.vocab_size], Init::Normal));
    }
    specs
}

/// Named parameter tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    tensors: BTreeMap<String, Tensor>,
    precision: Precision,
}

impl ParameterStore {
    /// Scaled-normal initialization (variance `1 / d_model`) seeded from the config.
    pub fn init(config: &ModelConfig, precision: Precision) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, (1.0 / config.d_model as f64).sqrt()).expect("finite std");
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in parameter_specs(config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Ones => vec![1.0; n],
            };
            tensors.insert(name, Tensor::new(shape, data));
        }
        let mut store = Self { tensors, precision };
        store.apply_precision();
        Ok(store)
    }

    /// Builds a store from loaded tensors, checking names and shapes against `config`.
    pub fn from_tensors(
        config: &ModelConfig,
        tensors: BTreeMap<String, Tensor>,
        precision: Precision,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        for (name, shape, _) in parameter_specs(config) {
            let t = tensors
                .get(&name)
                .ok_or_else(|| ModelError::MissingParameter(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ShapeMismatch {
                    name,
                    expected: shape,
                    found: t.shape().to_vec(),
                });
            }
        }
        let mut store = Self { tensors, precision };
        store.apply_precision();
        Ok(store)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        self.tensors
            .get(name)
            .ok_or_else(|| ModelError::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Parameter count implied by a config, without allocating.
    pub fn count_for(config: &ModelConfig) -> usize {
        parameter_specs(config)
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }

    pub fn group_of(name: &str) -> ParamGroup {
        if name.starts_with("decoder.") {
            ParamGroup::Decoder
        } else {
            ParamGroup::Encoder
        }
    }

    /// Names of the matrices used as the output projection: the embedding when tied.
    pub fn output_projection_name(config: &ModelConfig) -> &'static str {
        if config.tie_decoder_embedding {
            EMBEDDING
        } else {
            LM_HEAD
        }
    }

    pub(crate) fn apply_precision(&mut self) {
        if self.precision == Precision::Single {
            for t in self.tensors.values_mut() {
                for v in t.data_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
    }

    /// Concatenated little-endian bytes of every tensor, in name order.
    /// Used to assert that parameters are untouched.
    pub fn fingerprint(&self, filter: impl Fn(&str) -> bool) -> Vec<u8> {
        let mut out = Vec::new();
        for (name, t) in &self.tensors {
            if filter(name) {
                out.extend_from_slice(name.as_bytes());
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}
