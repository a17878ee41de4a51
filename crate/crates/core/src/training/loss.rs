use std::collections::BTreeMap;

use super::TrainingError;
use crate::autograd::{Graph, Tensor};
use crate::corpus::{TokenId, PAD_ID};
use crate::model::{shift_right, Batch, Dropout, Forward, ModelConfig, ModelError, ParameterStore};

/// Mean negative log-likelihood over positions where `loss_mask` is set.
/// `logits` is `[..., vocab]` with one row per target.
pub fn cross_entropy(logits: &Tensor, targets: &[TokenId], loss_mask: &[bool]) -> Result<f64, TrainingError> {
    let mut g = Graph::new();
    let rows = logits.rows();
    let v = logits.last_dim();
    let l = g.constant(logits.clone().reshape(vec![rows, v]));
    let ce = g.cross_entropy(l, targets, loss_mask)?;
    Ok(g.value(ce).item())
}

/// Padded encoder/decoder tensors for a set of (input, target, loss mask) triples.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub input: Batch,
    pub decoder_input: Batch,
    /// Flattened `[batch, target_len]`, pad beyond each target.
    pub targets: Vec<TokenId>,
    /// Loss-active positions; never set on padding.
    pub active: Vec<bool>,
}

impl TrainingBatch {
    pub fn new(examples: &[(Vec<TokenId>, Vec<TokenId>, Vec<bool>)]) -> Result<Self, ModelError> {
        let inputs: Vec<Vec<TokenId>> = examples.iter().map(|e| e.0.clone()).collect();
        let dec: Vec<Vec<TokenId>> = examples.iter().map(|e| shift_right(&e.1)).collect();
        let input = Batch::from_sequences(&inputs)?;
        let decoder_input = Batch::from_sequences(&dec)?;
        let t = decoder_input.len;
        let mut targets = Vec::with_capacity(examples.len() * t);
        let mut active = Vec::with_capacity(examples.len() * t);
        for (_, target, mask) in examples {
            assert_eq!(target.len(), mask.len(), "loss mask length mismatch");
            targets.extend_from_slice(target);
            targets.extend(std::iter::repeat_n(PAD_ID, t - target.len()));
            active.extend_from_slice(mask);
            active.extend(std::iter::repeat_n(false, t - target.len()));
        }
        Ok(Self {
            input,
            decoder_input,
            targets,
            active,
        })
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Loss and gradients for every parameter accepted by `trainable`.
pub fn loss_and_gradients(
    config: &ModelConfig,
    params: &ParameterStore,
    batch: &TrainingBatch,
    trainable: impl Fn(&str) -> bool,
    dropout: Option<Dropout>,
) -> Result<(f64, BTreeMap<String, Tensor>), TrainingError> {
    let mut fwd = Forward::training(config, params, trainable, dropout);
    let enc = fwd.encode(&batch.input)?;
    let logits = fwd.decode(enc, &batch.input, &batch.decoder_input)?;
    let loss = fwd.graph.cross_entropy(logits, &batch.targets, &batch.active)?;
    let value = fwd.graph.value(loss).item();
    let vars: Vec<(String, _)> = fwd.param_vars().iter().map(|(k, &v)| (k.clone(), v)).collect();
    let mut grads = fwd.graph.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, var) in vars {
        if let Some(g) = grads.take(var) {
            out.insert(name, g);
        }
    }
    Ok((value, out))
}
