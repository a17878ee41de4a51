use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{EMBEDDING, LM_HEAD, RELPOS_BIAS};
use super::relpos::bucket_grid;
use super::{Activation, ModelConfig, ModelError, ParameterStore};
use crate::autograd::{AttentionSpec, Graph, Tensor, Var};
use crate::corpus::{TokenId, PAD_ID};

const NORM_EPS: f64 = 1e-6;

/// Right-padded token batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<TokenId>,
    /// `true` at real tokens, `false` at padding.
    pub mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl Batch {
    pub fn from_sequences(seqs: &[Vec<TokenId>]) -> Result<Self, ModelError> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(ModelError::EmptyBatch);
        }
        let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * len);
        let mut mask = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(PAD_ID, len - s.len()));
            mask.extend(std::iter::repeat_n(true, s.len()));
            mask.extend(std::iter::repeat_n(false, len - s.len()));
        }
        Ok(Self {
            ids,
            mask,
            batch: seqs.len(),
            len,
        })
    }

    pub fn single(seq: &[TokenId]) -> Result<Self, ModelError> {
        Self::from_sequences(&[seq.to_vec()])
    }

    /// Number of real tokens in row `b`.
    pub fn row_len(&self, b: usize) -> usize {
        self.mask[b * self.len..(b + 1) * self.len]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    fn check(&self, config: &ModelConfig) -> Result<(), ModelError> {
        if self.len > config.max_length {
            return Err(ModelError::LengthExceeded {
                len: self.len,
                max: config.max_length,
            });
        }
        if let Some(&id) = self.ids.iter().find(|&&id| id >= config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: config.vocab_size,
            });
        }
        Ok(())
    }
}

/// Prepends the decoder start token (pad) and drops the last target token.
pub fn shift_right(target: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(target.len());
    out.push(PAD_ID);
    out.extend_from_slice(&target[..target.len().saturating_sub(1)]);
    out
}

/// Inverted dropout driven by its own seeded generator.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let keep = 1.0 / (1.0 - self.rate);
        let data = (0..n)
            .map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

/// Final encoder states `[batch, len, d_model]`; padded rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub states: Tensor,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl HiddenStates {
    pub fn token(&self, b: usize, i: usize) -> &[f64] {
        self.states.row(b * self.len + i)
    }
}

type TrainableFilter<'a> = Box<dyn Fn(&str) -> bool + 'a>;

/// One forward pass recorded on a fresh [`Graph`].
///
/// Parameters enter the graph lazily. Those accepted by the trainable filter
/// become differentiable leaves; the rest are constants.
pub struct Forward<'a> {
    pub graph: Graph,
    config: &'a ModelConfig,
    params: &'a ParameterStore,
    trainable: Option<TrainableFilter<'a>>,
    vars: HashMap<String, Var>,
    dropout: Option<Dropout>,
    zero_attention: bool,
    encoder_attention: Vec<Var>,
}

impl<'a> Forward<'a> {
    pub fn inference(config: &'a ModelConfig, params: &'a ParameterStore) -> Self {
        Self {
            graph: Graph::new(),
            config,
            params,
            trainable: None,
            vars: HashMap::new(),
            dropout: None,
            zero_attention: false,
            encoder_attention: Vec::new(),
        }
    }

    pub fn training(
        config: &'a ModelConfig,
        params: &'a ParameterStore,
        trainable: impl Fn(&str) -> bool + 'a,
        dropout: Option<Dropout>,
    ) -> Self {
        Self {
            trainable: Some(Box::new(trainable)),
            dropout: dropout.filter(|d| d.rate > 0.0),
            ..Self::inference(config, params)
        }
    }

    /// Diagnostic mode: all attention weights are zero, so each position only
    /// sees its own token.
    pub fn with_zero_attention(mut self) -> Self {
        self.zero_attention = true;
        self
    }

    pub fn param(&mut self, name: &str) -> Result<Var, ModelError> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?.clone();
        let trainable = self.trainable.as_ref().is_some_and(|f| f(name));
        let v = if trainable {
            self.graph.param(t)
        } else {
            self.graph.constant(t)
        };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Graph leaves created for parameters so far.
    pub fn param_vars(&self) -> &HashMap<String, Var> {
        &self.vars
    }

    /// Attention nodes of the encoder layers, in layer order.
    pub fn encoder_attention(&self) -> &[Var] {
        &self.encoder_attention
    }

    fn dropout(&mut self, x: Var) -> Var {
        match &mut self.dropout {
            Some(d) => {
                let mask = d.mask(self.graph.value(x).shape());
                self.graph.mul_const(x, mask)
            }
            None => x,
        }
    }

    fn norm(&mut self, x: Var, name: &str) -> Result<Var, ModelError> {
        let s = self.param(name)?;
        Ok(self.graph.rms_norm(x, s, NORM_EPS))
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        prefix: &str,
        x: Var,
        memory: Var,
        bias: Option<Var>,
        batch: usize,
        q_len: usize,
        k_len: usize,
        key_mask: &[bool],
        causal: bool,
    ) -> Result<(Var, Var), ModelError> {
        let wq = self.param(&format!("{prefix}.q"))?;
        let wk = self.param(&format!("{prefix}.k"))?;
        let wv = self.param(&format!("{prefix}.v"))?;
        let wo = self.param(&format!("{prefix}.o"))?;
        let q = self.graph.matmul(x, wq);
        let k = self.graph.matmul(memory, wk);
        let v = self.graph.matmul(memory, wv);
        let spec = AttentionSpec {
            batch,
            q_len,
            k_len,
            heads: self.config.n_heads,
            key_mask: key_mask.to_vec(),
            causal,
            zero_weights: self.zero_attention,
        };
        let a = self.graph.attention(q, k, v, bias, spec);
        Ok((self.graph.matmul(a, wo), a))
    }

    fn feed_forward(&mut self, prefix: &str, x: Var) -> Result<Var, ModelError> {
        let hidden = match self.config.activation {
            Activation::GatedGelu => {
                let wg = self.param(&format!("{prefix}.ffn.wi_gate"))?;
                let wl = self.param(&format!("{prefix}.ffn.wi_lin"))?;
                let gate = self.graph.matmul(x, wg);
                let gate = self.graph.gelu(gate);
                let lin = self.graph.matmul(x, wl);
                self.graph.mul(gate, lin)
            }
            Activation::Relu => {
                let wi = self.param(&format!("{prefix}.ffn.wi"))?;
                let h = self.graph.matmul(x, wi);
                self.graph.relu(h)
            }
        };
        let hidden = self.dropout(hidden);
        let wo = self.param(&format!("{prefix}.ffn.wo"))?;
        Ok(self.graph.matmul(hidden, wo))
    }

    /// Encoder stack; returns states `[batch * len, d_model]`.
    pub fn encode(&mut self, input: &Batch) -> Result<Var, ModelError> {
        input.check(self.config)?;
        let (b, l) = (input.batch, input.len);
        let emb = self.param(EMBEDDING)?;
        let mut h = self.graph.embedding(emb, &input.ids);
        h = self.dropout(h);
        let bias = if self.config.n_encoder_layers > 0 {
            let table = self.param(RELPOS_BIAS)?;
            let grid = bucket_grid(l, l, self.config, true);
            Some(self.graph.gather_bias(table, &grid, l, l))
        } else {
            None
        };
        for i in 0..self.config.n_encoder_layers {
            let p = format!("encoder.layer{i}");
            let x = self.norm(h, &format!("{p}.attn_norm"))?;
            let (a, probs) =
                self.attention(&format!("{p}.attn"), x, x, bias, b, l, l, &input.mask, false)?;
            self.encoder_attention.push(probs);
            let a = self.dropout(a);
            h = self.graph.add(h, a);
            let x = self.norm(h, &format!("{p}.ffn_norm"))?;
            let f = self.feed_forward(&p, x)?;
            let f = self.dropout(f);
            h = self.graph.add(h, f);
        }
        let h = self.norm(h, "encoder.final_norm")?;
        Ok(self.dropout(h))
    }

    /// Decoder stack over `decoder_input` attending to encoder states;
    /// returns logits `[batch * target_len, vocab_size]`.
    pub fn decode(
        &mut self,
        encoded: Var,
        encoder_input: &Batch,
        decoder_input: &Batch,
    ) -> Result<Var, ModelError> {
        decoder_input.check(self.config)?;
        assert_eq!(encoder_input.batch, decoder_input.batch, "batch size mismatch");
        let (b, t, s) = (decoder_input.batch, decoder_input.len, encoder_input.len);
        let emb = self.param(EMBEDDING)?;
        let mut h = self.graph.embedding(emb, &decoder_input.ids);
        h = self.dropout(h);
        let bias = if self.config.n_decoder_layers > 0 {
            let table = self.param(RELPOS_BIAS)?;
            let grid = bucket_grid(t, t, self.config, false);
            Some(self.graph.gather_bias(table, &grid, t, t))
        } else {
            None
        };
        for i in 0..self.config.n_decoder_layers {
            let p = format!("decoder.layer{i}");
            let x = self.norm(h, &format!("{p}.self_norm"))?;
            let (a, _) = self.attention(
                &format!("{p}.self_attn"),
                x,
                x,
                bias,
                b,
                t,
                t,
                &decoder_input.mask,
                true,
            )?;
            let a = self.dropout(a);
            h = self.graph.add(h, a);
            let x = self.norm(h, &format!("{p}.cross_norm"))?;
            let (c, _) = self.attention(
                &format!("{p}.cross_attn"),
                x,
                encoded,
                None,
                b,
                t,
                s,
                &encoder_input.mask,
                false,
            )?;
            let c = self.dropout(c);
            h = self.graph.add(h, c);
            let x = self.norm(h, &format!("{p}.ffn_norm"))?;
            let f = self.feed_forward(&p, x)?;
            let f = self.dropout(f);
            h = self.graph.add(h, f);
        }
        let h = self.norm(h, "decoder.final_norm")?;
        let h = self.dropout(h);
        if self.config.tie_decoder_embedding {
            let scaled = self.graph.scale(h, 1.0 / (self.config.d_model as f64).sqrt());
            Ok(self.graph.matmul_t(scaled, emb))
        } else {
            let head = self.param(LM_HEAD)?;
            Ok(self.graph.matmul(h, head))
        }
    }
}

pub fn encoder_forward(
    input: &Batch,
    config: &ModelConfig,
    params: &ParameterStore,
) -> Result<HiddenStates, ModelError> {
    let mut fwd = Forward::inference(config, params);
    let enc = fwd.encode(input)?;
    let mut states = fwd.graph.value(enc).clone();
    let d = config.d_model;
    for (row, &m) in states.data_mut().chunks_mut(d).zip(&input.mask) {
        if !m {
            row.fill(0.0);
        }
    }
    Ok(HiddenStates {
        states: states.reshape(vec![input.batch, input.len, d]),
        mask: input.mask.clone(),
        batch: input.batch,
        len: input.len,
    })
}

/// Logits `[batch, target_len, vocab_size]` for teacher-forced decoding.
pub fn seq2seq_logits(
    input: &Batch,
    decoder_input: &Batch,
    config: &ModelConfig,
    params: &ParameterStore,
) -> Result<Tensor, ModelError> {
    let mut fwd = Forward::inference(config, params);
    let enc = fwd.encode(input)?;
    let logits = fwd.decode(enc, input, decoder_input)?;
    Ok(fwd
        .graph
        .value(logits)
        .clone()
        .reshape(vec![decoder_input.batch, decoder_input.len, config.vocab_size]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, EOS_ID};
    use crate::model::Precision;

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            d_ff: 24,
            dropout: 0.0,
            ..ModelConfig::toy()
        }
    }

    fn ids(s: &str) -> Vec<TokenId> {
        let mut v = Vocabulary::new().encode(s).unwrap();
        v.push(EOS_ID);
        v
    }

    #[test]
    fn output_shapes() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let batch = Batch::from_sequences(&[ids("MKVLAG"), ids("AC")]).unwrap();
        let h = encoder_forward(&batch, &cfg, &params).unwrap();
        assert_eq!(h.states.shape(), &[2, 7, 64]);
        // padded rows zeroed
        assert!(h.token(1, 5).iter().all(|&v| v == 0.0));
        let dec = Batch::from_sequences(&[shift_right(&ids("MK")), shift_right(&ids("A"))]).unwrap();
        let logits = seq2seq_logits(&batch, &dec, &cfg, &params).unwrap();
        assert_eq!(logits.shape(), &[2, 3, cfg.vocab_size]);
    }

    #[test]
    fn empty_encoder_is_normalized_embedding() {
        let cfg = ModelConfig {
            n_encoder_layers: 0,
            ..small()
        };
        let params = ParameterStore::init(&cfg, Precision::Double).unwrap();
        let seq = ids("ACD");
        let h = encoder_forward(&Batch::single(&seq).unwrap(), &cfg, &params).unwrap();
        let emb = params.get("shared.embedding").unwrap();
        for (i, &t) in seq.iter().enumerate() {
            let row = emb.row(t);
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64 + NORM_EPS).sqrt();
            for (a, b) in h.token(0, i).iter().zip(row) {
                assert!((a - b / rms).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_limit_enforced() {
        let cfg = ModelConfig {
            max_length: 4,
            ..small()
        };
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let err = encoder_forward(&Batch::single(&ids("ACDEF")).unwrap(), &cfg, &params);
        assert!(matches!(err, Err(ModelError::LengthExceeded { len: 6, max: 4 })));
    }

    #[test]
    fn decoder_is_causal() {
        let cfg = small();
        let params = ParameterStore::init(&cfg, Precision::Double).unwrap();
        let enc = Batch::single(&ids("MKVLAGHHW")).unwrap();
        let dec_a = shift_right(&ids("ACDEFG"));
        let mut dec_b = dec_a.clone();
        let t = 4;
        dec_b[t] = Vocabulary::new().residue_id('W').unwrap();
        let la = seq2seq_logits(&enc, &Batch::single(&dec_a).unwrap(), &cfg, &params).unwrap();
        let lb = seq2seq_logits(&enc, &Batch::single(&dec_b).unwrap(), &cfg, &params).unwrap();
        let v = cfg.vocab_size;
        assert_eq!(la.data()[..t * v], lb.data()[..t * v]);
        assert_ne!(la.data()[t * v..], lb.data()[t * v..]);
    }

    #[test]
    fn tied_projection_aliases_embedding() {
        let cfg = ModelConfig {
            tie_decoder_embedding: true,
            ..small()
        };
        let mut params = ParameterStore::init(&cfg, Precision::Double).unwrap();
        let enc = Batch::single(&ids("MKVL")).unwrap();
        let dec = Batch::single(&shift_right(&ids("MK"))).unwrap();
        let before = seq2seq_logits(&enc, &dec, &cfg, &params).unwrap();
        // Perturb an embedding row never used as an input token: only the
        // output projection can see it.
        let unused = Vocabulary::new().residue_id('Y').unwrap();
        let d = cfg.d_model;
        params.get_mut("shared.embedding").unwrap().data_mut()[unused * d] += 1.0;
        let after = seq2seq_logits(&enc, &dec, &cfg, &params).unwrap();
        let v = cfg.vocab_size;
        for pos in 0..3 {
            for tok in 0..v {
                let delta = after.data()[pos * v + tok] - before.data()[pos * v + tok];
                if tok == unused {
                    assert!(delta.abs() > 0.0);
                } else {
                    assert_eq!(delta, 0.0);
                }
            }
        }
    }

    #[test]
    fn zeroed_attention_isolates_positions() {
        let cfg = small();
        let params = ParameterStore::init(&cfg, Precision::Double).unwrap();
        let a = ids("ACDEFG");
        let mut b = a.clone();
        b[4] = Vocabulary::new().residue_id('W').unwrap();
        let run = |s: &[TokenId]| {
            let batch = Batch::single(s).unwrap();
            let mut fwd = Forward::inference(&cfg, &params).with_zero_attention();
            let h = fwd.encode(&batch).unwrap();
            fwd.graph.value(h).clone()
        };
        let (ha, hb) = (run(&a), run(&b));
        for i in 0..a.len() {
            if i == 4 {
                assert_ne!(ha.row(i), hb.row(i));
            } else {
                assert_eq!(ha.row(i), hb.row(i));
            }
        }
    }

    #[test]
    fn dropout_off_is_deterministic() {
        let cfg = ModelConfig::toy();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let batch = Batch::single(&ids("MKVLAGHHW")).unwrap();
        let a = encoder_forward(&batch, &cfg, &params).unwrap();
        let b = encoder_forward(&batch, &cfg, &params).unwrap();
        assert_eq!(a, b);
    }
}
