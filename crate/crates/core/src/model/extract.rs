use std::str::FromStr;

use super::{Batch, Forward, ModelConfig, ModelError, ParameterStore};
use crate::autograd::Tensor;
use crate::corpus::{SequenceRecord, Vocabulary};

const EXTRACT_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Per-residue `[L, d_model]` matrix.
    #[default]
    None,
    Mean,
    Max,
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Pooling::None),
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    /// `[L, d_model]` or, when pooled, `[d_model]`.
    pub values: Tensor,
}

/// Encoder states for each record. Sequences are fed without a trailing eos
/// so row `i` always belongs to residue `i`.
pub fn extract_embeddings(
    records: &[SequenceRecord],
    config: &ModelConfig,
    params: &ParameterStore,
    pooling: Pooling,
) -> Result<Vec<Embedding>, ModelError> {
    let vocab = Vocabulary::new();
    let d = config.d_model;
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EXTRACT_BATCH) {
        let seqs = chunk
            .iter()
            .map(|r| vocab.encode(&r.sequence))
            .collect::<Result<Vec<_>, _>>()?;
        let batch = Batch::from_sequences(&seqs)?;
        let hidden = super::encoder_forward(&batch, config, params)?;
        for (b, rec) in chunk.iter().enumerate() {
            let len = seqs[b].len();
            let rows: Vec<&[f64]> = (0..len).map(|i| hidden.token(b, i)).collect();
            out.push(Embedding {
                id: rec.id.clone(),
                values: pool(&rows, d, pooling),
            });
        }
    }
    Ok(out)
}

fn pool(rows: &[&[f64]], d: usize, pooling: Pooling) -> Tensor {
    match pooling {
        Pooling::None => Tensor::new(vec![rows.len(), d], rows.concat()),
        Pooling::Mean => {
            let mut acc = vec![0.0; d];
            for r in rows {
                for (a, v) in acc.iter_mut().zip(*r) {
                    *a += v;
                }
            }
            let n = rows.len() as f64;
            Tensor::new(vec![d], acc.into_iter().map(|a| a / n).collect())
        }
        Pooling::Max => {
            let mut acc = vec![f64::NEG_INFINITY; d];
            for r in rows {
                for (a, &v) in acc.iter_mut().zip(*r) {
                    *a = a.max(v);
                }
            }
            Tensor::new(vec![d], acc)
        }
    }
}

/// Encoder self-attention weights for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    pub layers: usize,
    pub heads: usize,
    pub len: usize,
    /// `[layers, heads, len, len]`, row-major.
    pub weights: Vec<f64>,
}

impl AttentionMaps {
    pub fn map(&self, layer: usize, head: usize) -> &[f64] {
        let n = self.len * self.len;
        &self.weights[(layer * self.heads + head) * n..][..n]
    }

    /// Symmetrized average over all layers and heads; a simple contact score.
    pub fn mean_symmetric(&self) -> Vec<f64> {
        let l = self.len;
        let mut out = vec![0.0; l * l];
        let count = (self.layers * self.heads) as f64;
        for m in self.weights.chunks(l * l) {
            for i in 0..l {
                for j in 0..l {
                    out[i * l + j] += 0.5 * (m[i * l + j] + m[j * l + i]) / count;
                }
            }
        }
        out
    }
}

pub fn extract_attention_maps(
    record: &SequenceRecord,
    config: &ModelConfig,
    params: &ParameterStore,
) -> Result<AttentionMaps, ModelError> {
    let ids = Vocabulary::new().encode(&record.sequence)?;
    let batch = Batch::single(&ids)?;
    let mut fwd = Forward::inference(config, params);
    fwd.encode(&batch)?;
    let mut weights = Vec::new();
    for &v in fwd.encoder_attention() {
        let probs = fwd.graph.attention_probs(v).expect("attention node");
        weights.extend_from_slice(probs);
    }
    Ok(AttentionMaps {
        layers: config.n_encoder_layers,
        heads: config.n_heads,
        len: ids.len(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encoder_forward, Precision};

    fn rec(id: &str, s: &str) -> SequenceRecord {
        SequenceRecord::new(id, s).unwrap()
    }

    #[test]
    fn single_residue_pools_agree() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let r = [rec("a", "W")];
        let none = extract_embeddings(&r, &cfg, &params, Pooling::None).unwrap();
        let mean = extract_embeddings(&r, &cfg, &params, Pooling::Mean).unwrap();
        let max = extract_embeddings(&r, &cfg, &params, Pooling::Max).unwrap();
        assert_eq!(none[0].values.data(), mean[0].values.data());
        assert_eq!(mean[0].values.data(), max[0].values.data());
        assert_eq!(mean[0].values.shape(), &[cfg.d_model]);
    }

    #[test]
    fn padding_leaves_pooled_vectors_unchanged() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let short = rec("short", "MKVL");
        let long = rec("long", "MKVLAGHHWPERTYIK");
        for pooling in [Pooling::Mean, Pooling::Max, Pooling::None] {
            let alone = extract_embeddings(std::slice::from_ref(&short), &cfg, &params, pooling).unwrap();
            let padded = extract_embeddings(&[long.clone(), short.clone()], &cfg, &params, pooling).unwrap();
            assert_eq!(alone[0].values.shape(), padded[1].values.shape());
            for (a, b) in alone[0].values.data().iter().zip(padded[1].values.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unpooled_equals_encoder_states() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let r = rec("x", "ACDEFGHIK");
        let emb = extract_embeddings(std::slice::from_ref(&r), &cfg, &params, Pooling::None).unwrap();
        let ids = Vocabulary::new().encode(&r.sequence).unwrap();
        let h = encoder_forward(&Batch::single(&ids).unwrap(), &cfg, &params).unwrap();
        assert_eq!(emb[0].values.data(), h.states.data());
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let maps = extract_attention_maps(&rec("x", "MKVLAGHHWPER"), &cfg, &params).unwrap();
        assert_eq!(maps.weights.len(), cfg.n_encoder_layers * cfg.n_heads * 12 * 12);
        for row in maps.weights.chunks(12) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let one = extract_attention_maps(&rec("y", "A"), &cfg, &params).unwrap();
        assert!(one.weights.iter().all(|&w| w == 1.0));
        assert_eq!(one.weights.len(), cfg.n_encoder_layers * cfg.n_heads);
    }

    #[test]
    fn length_limit() {
        let cfg = ModelConfig {
            max_length: 3,
            ..ModelConfig::toy()
        };
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        assert!(matches!(
            extract_embeddings(&[rec("x", "ACDE")], &cfg, &params, Pooling::Mean),
            Err(ModelError::LengthExceeded { .. })
        ));
    }
}
