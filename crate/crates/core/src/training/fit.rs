use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{loss_and_gradients, lr_schedule, optimizer_step, AdamState, AdamWConfig, TrainingBatch, TrainingError};
use crate::corpus::{SequenceRecord, TokenId, Vocabulary, EOS_ID};
use crate::corruption::{corrupt, CorruptionSpec};
use crate::model::{Dropout, ModelConfig, ParamGroup, ParameterStore};

/// What the decoder learns to produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Reconstruct the corruption target from the corrupted input.
    Denoise(CorruptionSpec),
    /// Encoder sees the first `prompt_length` residues, decoder emits the rest.
    Autoregressive { prompt_length: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    /// Stop early once this many optimizer steps have run.
    pub max_steps: Option<usize>,
    pub weight_decay: f64,
    /// Drives per-example corruption and dropout.
    pub seed: u64,
    /// Drives the per-epoch batch order only.
    pub order_seed: u64,
    /// Overrides the model's dropout rate when set.
    pub dropout: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 8,
            peak_lr: 1e-3,
            warmup_steps: 0,
            max_steps: None,
            weight_decay: 0.0,
            seed: 42,
            order_seed: 42,
            dropout: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let fail = |m: &str| Err(TrainingError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be at least 1");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail("peak_lr must be positive");
        }
        if let Some(d) = self.dropout {
            if !(0.0..1.0).contains(&d) {
                return fail("dropout must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    /// Mean batch loss of each epoch that ran at least one step.
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tlr\tloss\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{:.6e}\t{:.6}\n", e.step, e.lr, e.loss));
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), TrainingError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|source| TrainingError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Corruption seed for one example in one epoch.
pub fn example_seed(global: u64, epoch: usize, id: &str) -> u64 {
    splitmix(splitmix(splitmix(global) ^ epoch as u64) ^ fnv1a(id))
}

type Example = (Vec<TokenId>, Vec<TokenId>, Vec<bool>);

fn make_example(ids: &[TokenId], objective: &Objective, seed: u64) -> Result<Example, TrainingError> {
    match objective {
        Objective::Denoise(spec) => {
            let pair = corrupt(ids, &spec.with_seed(seed))?;
            Ok((pair.input_ids, pair.target_ids, pair.loss_mask))
        }
        Objective::Autoregressive { prompt_length } => {
            let cut = (*prompt_length).min(ids.len().saturating_sub(1)).max(1);
            let mut input = ids[..cut].to_vec();
            input.push(EOS_ID);
            let mut target = ids[cut..].to_vec();
            target.push(EOS_ID);
            let mask = vec![true; target.len()];
            Ok((input, target, mask))
        }
    }
}

/// Runs the epoch loop, updating `params` in place. Parameters in a frozen
/// group are never written.
pub fn fit(
    config: &ModelConfig,
    params: &mut ParameterStore,
    corpus: &[SequenceRecord],
    objective: &Objective,
    freeze: &[ParamGroup],
    train: &TrainConfig,
) -> Result<TrainingLog, TrainingError> {
    train.validate()?;
    if corpus.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    if let Objective::Denoise(spec) = objective {
        spec.validate()?;
    }
    let vocab = Vocabulary::new();
    let encoded = corpus
        .iter()
        .map(|r| vocab.encode(&r.sequence))
        .collect::<Result<Vec<_>, _>>()?;

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by_key(|&i| (encoded[i].len(), i));
    let chunks: Vec<Vec<usize>> = order.chunks(train.batch_size).map(<[usize]>::to_vec).collect();
    let total = (train.epochs * chunks.len()).min(train.max_steps.unwrap_or(usize::MAX));
    let trainable = |name: &str| !freeze.contains(&ParameterStore::group_of(name));
    let dropout_rate = train.dropout.unwrap_or(config.dropout);
    let adam = AdamWConfig {
        weight_decay: train.weight_decay,
        ..AdamWConfig::default()
    };
    let mut state = AdamState::default();
    let mut log = TrainingLog::default();
    let mut step = 0;

    'epochs: for epoch in 0..train.epochs {
        let mut batch_order = chunks.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(train.order_seed ^ splitmix(epoch as u64)));
        batch_order.shuffle(&mut rng);
        for chunk in &batch_order {
            if step >= total {
                break 'epochs;
            }
            let examples = chunk
                .iter()
                .map(|&i| make_example(&encoded[i], objective, example_seed(train.seed, epoch, &corpus[i].id)))
                .collect::<Result<Vec<_>, _>>()?;
            let batch = TrainingBatch::new(&examples)?;
            let dropout = (dropout_rate > 0.0)
                .then(|| Dropout::new(dropout_rate, splitmix(train.seed ^ splitmix(step as u64 + 1))));
            let (loss, grads) = loss_and_gradients(config, params, &batch, trainable, dropout)?;
            let lr = lr_schedule(step, train.warmup_steps, total, train.peak_lr);
            optimizer_step(params, &grads, &mut state, &adam, lr);
            log::debug!("step {step} epoch {epoch} lr {lr:.3e} loss {loss:.4}");
            log.entries.push(LogEntry { step, epoch, lr, loss });
            step += 1;
        }
    }
    for epoch in 0..train.epochs {
        let losses: Vec<f64> = log.entries.iter().filter(|e| e.epoch == epoch).map(|e| e.loss).collect();
        if !losses.is_empty() {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            log::info!("epoch {epoch}: mean loss {mean:.4} over {} steps", losses.len());
            log.epoch_losses.push(mean);
        }
    }
    Ok(log)
}
