use super::GenerationError;
use crate::autograd::Tensor;
use crate::corpus::TokenId;
use crate::model::{Batch, Forward, ModelConfig, ParameterStore};

/// Divides logits by `temperature`; token order is preserved.
pub fn warp_logits(logits: &[f64], temperature: f64) -> Result<Vec<f64>, GenerationError> {
    if !(temperature > 0.0) {
        return Err(GenerationError::NonPositiveTemperature(temperature));
    }
    Ok(logits.iter().map(|x| x / temperature).collect())
}

/// Anything that scores the next token given decoded prefixes.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    /// One logit row per prefix. All prefixes have the same length.
    fn next_logits(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, GenerationError>;
}

/// Decoder steps over a fixed encoder input. The encoder runs once.
pub struct Seq2SeqStepper<'a> {
    config: &'a ModelConfig,
    params: &'a ParameterStore,
    encoder_input: Batch,
    encoded: Tensor,
}

impl<'a> Seq2SeqStepper<'a> {
    pub fn new(
        config: &'a ModelConfig,
        params: &'a ParameterStore,
        encoder_input: &[TokenId],
    ) -> Result<Self, GenerationError> {
        let batch = Batch::single(encoder_input)?;
        let mut fwd = Forward::inference(config, params);
        let enc = fwd.encode(&batch)?;
        let encoded = fwd.graph.value(enc).clone();
        Ok(Self {
            config,
            params,
            encoder_input: batch,
            encoded,
        })
    }
}

impl StepModel for Seq2SeqStepper<'_> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn next_logits(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, GenerationError> {
        let n = prefixes.len();
        let len = self.encoder_input.len;
        let d = self.config.d_model;
        let mut enc_data = Vec::with_capacity(n * len * d);
        let mut ids = Vec::with_capacity(n * len);
        let mut mask = Vec::with_capacity(n * len);
        for _ in 0..n {
            enc_data.extend_from_slice(self.encoded.data());
            ids.extend_from_slice(&self.encoder_input.ids);
            mask.extend_from_slice(&self.encoder_input.mask);
        }
        let enc_batch = Batch {
            ids,
            mask,
            batch: n,
            len,
        };
        let dec: Vec<Vec<TokenId>> = prefixes
            .iter()
            .map(|p| {
                let mut v = Vec::with_capacity(p.len() + 1);
                v.push(crate::corpus::PAD_ID);
                v.extend_from_slice(p);
                v
            })
            .collect();
        let dec_batch = Batch::from_sequences(&dec)?;
        let mut fwd = Forward::inference(self.config, self.params);
        let enc = fwd.graph.constant(Tensor::new(vec![n * len, d], enc_data));
        let logits = fwd.decode(enc, &enc_batch, &dec_batch)?;
        let v = self.config.vocab_size;
        let t = dec_batch.len;
        let data = fwd.graph.value(logits).data();
        Ok((0..n)
            .map(|b| data[(b * t + t - 1) * v..(b * t + t) * v].to_vec())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub num_beams: usize,
    pub temperature: f64,
    /// Maximum number of decoded tokens, eos included.
    pub max_steps: usize,
    /// Hypotheses that emit this token are complete.
    pub eos: Option<TokenId>,
}

/// A decoded sequence with its summed log-probability. `tokens` ends with
/// eos when the hypothesis finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub score: f64,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NEG_INFINITY; row.len()];
    }
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Deterministic beam search ranked by accumulated warped log-probability.
///
/// `constrain(prefix, logits)` may set disallowed logits to negative
/// infinity before warping. Candidate ties are broken by beam index, then
/// token id.
pub fn beam_search(
    model: &dyn StepModel,
    cfg: &BeamConfig,
    constrain: &dyn Fn(&[TokenId], &mut [f64]),
) -> Result<Vec<Hypothesis>, GenerationError> {
    if !(cfg.temperature > 0.0) {
        return Err(GenerationError::NonPositiveTemperature(cfg.temperature));
    }
    if cfg.num_beams == 0 {
        return Err(GenerationError::InvalidConfig("num_beams must be at least 1".into()));
    }
    let k = cfg.num_beams;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..cfg.max_steps {
        if live.is_empty() {
            break;
        }
        if finished.len() >= k {
            let worst_kept = finished[k - 1].score;
            if live.iter().all(|h| h.score <= worst_kept) {
                break;
            }
        }
        let prefixes: Vec<Vec<TokenId>> = live.iter().map(|h| h.tokens.clone()).collect();
        let rows = model.next_logits(&prefixes)?;
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
        for (b, mut row) in rows.into_iter().enumerate() {
            constrain(&live[b].tokens, &mut row);
            let lp = log_softmax(&warp_logits(&row, cfg.temperature)?);
            for (t, &l) in lp.iter().enumerate() {
                if l > f64::NEG_INFINITY {
                    cands.push((live[b].score + l, b, t));
                }
            }
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next = Vec::with_capacity(k);
        for (score, b, t) in cands.into_iter().take(k) {
            let mut tokens = live[b].tokens.clone();
            tokens.push(t);
            let h = Hypothesis { tokens, score };
            if Some(t) == cfg.eos {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        finished.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.tokens.cmp(&y.tokens)));
        live = next;
    }
    finished.extend(live);
    finished.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.tokens.cmp(&y.tokens)));
    finished.truncate(k);
    Ok(finished)
}
