#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanforge::autograd::Tensor;
use spanforge::corpus::SequenceRecord;
use spanforge::model::{seq2seq_logits, ModelConfig, ParameterStore};
use spanforge::training::{loss_and_gradients, TrainingBatch};

pub const CANONICAL: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

pub fn random_sequence(len: usize, rng: &mut ChaCha8Rng) -> String {
    (0..len)
        .map(|_| CANONICAL[rng.random_range(0..CANONICAL.len())] as char)
        .collect()
}

pub fn random_corpus(n: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<SequenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(min_len..=max_len);
            SequenceRecord::new(format!("seq{i}"), random_sequence(len, &mut rng)).unwrap()
        })
        .collect()
}

/// Mean masked negative log-likelihood written out long-hand.
fn reference_loss(config: &ModelConfig, params: &ParameterStore, batch: &TrainingBatch) -> f64 {
    let logits = seq2seq_logits(&batch.input, &batch.decoder_input, config, params).unwrap();
    let v = config.vocab_size;
    let mut total = 0.0;
    let mut count = 0;
    for (i, row) in logits.data().chunks(v).enumerate() {
        if !batch.active[i] {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
        total += max + z.ln() - row[batch.targets[i]];
        count += 1;
    }
    total / count as f64
}

/// Per-tensor relative error `max|a - n| / max(max|a|, max|n|)` between the
/// analytic gradient and central differences with step `h`.
pub fn gradient_errors(
    config: &ModelConfig,
    params: &ParameterStore,
    batch: &TrainingBatch,
    h: f64,
) -> Vec<(String, f64)> {
    let (_, grads) = loss_and_gradients(config, params, batch, |_| true, None).unwrap();
    let mut out = Vec::new();
    let mut work = params.clone();
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let analytic = grads
            .get(&name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(params.get(&name).unwrap().shape().to_vec()));
        let mut max_diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..analytic.len() {
            let orig = work.get(&name).unwrap().data()[i];
            work.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let plus = reference_loss(config, &work, batch);
            work.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let minus = reference_loss(config, &work, batch);
            work.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[i];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        let err = if scale == 0.0 { 0.0 } else { max_diff / scale };
        out.push((name, err));
    }
    out
}
