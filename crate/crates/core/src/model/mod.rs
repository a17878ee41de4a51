//! T5-style encoder-decoder with one relative-position bias table shared by
//! every attention layer.

mod checkpoint;
mod config;
mod extract;
mod forward;
mod params;
mod relpos;

pub use checkpoint::{load_checkpoint, save_checkpoint, TensorFile};
pub use config::{Activation, ModelConfig};
pub use extract::{
    extract_attention_maps, extract_embeddings, AttentionMaps, Embedding, Pooling,
};
pub use forward::{
    encoder_forward, seq2seq_logits, shift_right, Batch, Dropout, Forward, HiddenStates,
};
pub use params::{ParamGroup, ParameterStore, Precision};
pub use relpos::{position_bias, relative_bucket};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    LengthExceeded { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("not a checkpoint of this version (found header {0:?})")]
    VersionMismatch(String),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("malformed checkpoint header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
