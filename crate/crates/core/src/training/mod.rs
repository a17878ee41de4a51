//! Denoising and auto-regressive training: loss, AdamW, schedule and the
//! epoch loop.

mod fit;
mod loss;
mod optim;

pub use fit::{example_seed, fit, LogEntry, Objective, TrainConfig, TrainingLog};
pub use loss::{cross_entropy, loss_and_gradients, TrainingBatch};
pub use optim::{lr_schedule, optimizer_step, optimizer_step_tensors, AdamState, AdamWConfig};

use crate::autograd::AutogradError;
use crate::corpus::CorpusError;
use crate::corruption::CorruptionError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
