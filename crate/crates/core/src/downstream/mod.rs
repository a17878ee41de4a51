//! Supervised probes on frozen embeddings and nearest-neighbour annotation
//! transfer.

mod knn;
mod probe;

pub use knn::{eat_accuracy, knn_transfer, EatAccuracy, EatIndex, EatLabels};
pub use probe::{
    probe_forward, train_probe, HeadType, Prediction, ProbeConfig, ProbeParams, ProbeResult, ProbeTrainConfig,
    Target,
};

use crate::autograd::AutogradError;
use crate::metrics::MetricError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum DownstreamError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("lookup index is empty")]
    EmptyIndex,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("target does not fit head {head}: {reason}")]
    BadTarget { head: String, reason: String },
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
