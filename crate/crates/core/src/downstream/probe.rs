use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::DownstreamError;
use crate::autograd::{AttentionSpec, Graph, Tensor, Var};
use crate::metrics::{contact_precision, q_accuracy, spearman, ContactRatio};
use crate::model::TensorFile;
use crate::training::{optimizer_step_tensors, AdamState, AdamWConfig};

const CONTACT_MIN_SEPARATION: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadType {
    Regression,
    Binary,
    Multiclass(usize),
    PerResidueMulticlass(usize),
    ResiduePairBinary,
}

impl HeadType {
    pub fn name(self) -> String {
        match self {
            HeadType::Regression => "regression".into(),
            HeadType::Binary => "binary".into(),
            HeadType::Multiclass(k) => format!("multiclass:{k}"),
            HeadType::PerResidueMulticlass(k) => format!("per_residue_multiclass:{k}"),
            HeadType::ResiduePairBinary => "residue_pair_binary".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (kind, k) = match s.split_once(':') {
            Some((a, b)) => (a, b.parse::<usize>().ok()),
            None => (s, None),
        };
        match (kind, k) {
            ("regression", None) => Some(HeadType::Regression),
            ("binary", None) => Some(HeadType::Binary),
            ("multiclass", Some(k)) if k >= 2 => Some(HeadType::Multiclass(k)),
            ("per_residue_multiclass", Some(k)) if k >= 2 => Some(HeadType::PerResidueMulticlass(k)),
            ("residue_pair_binary", None) => Some(HeadType::ResiduePairBinary),
            _ => None,
        }
    }

    /// Protein-level heads reduce the sequence with a global max pool.
    pub fn pooled(self) -> bool {
        matches!(self, HeadType::Regression | HeadType::Binary | HeadType::Multiclass(_))
    }

    fn outputs(self) -> usize {
        match self {
            HeadType::Regression | HeadType::Binary | HeadType::ResiduePairBinary => 1,
            HeadType::Multiclass(k) | HeadType::PerResidueMulticlass(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub input_dim: usize,
    pub head: HeadType,
    pub conv_kernel: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(input_dim: usize, head: HeadType) -> Self {
        Self {
            input_dim,
            head,
            conv_kernel: 7,
            n_heads: 4,
            dropout: 0.2,
            ffn_dim: input_dim / 2,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), DownstreamError> {
        let fail = |m: String| Err(DownstreamError::InvalidConfig(m));
        if self.input_dim < 2 || self.ffn_dim != self.input_dim / 2 {
            return fail(format!("ffn_dim must be input_dim / 2 (input_dim {})", self.input_dim));
        }
        if self.conv_kernel % 2 == 0 {
            return fail("conv_kernel must be odd".into());
        }
        if self.n_heads == 0 || self.input_dim % self.n_heads != 0 {
            return fail("input_dim must be divisible by n_heads".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Named probe tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub tensors: BTreeMap<String, Tensor>,
}

impl ProbeParams {
    pub fn init(cfg: &ProbeConfig) -> Result<Self, DownstreamError> {
        cfg.validate()?;
        let (d, f, out) = (cfg.input_dim, cfg.ffn_dim, cfg.head.outputs());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut tensors = BTreeMap::new();
        let mut normal = |name: &str, shape: Vec<usize>, fan_in: usize| {
            let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("finite std");
            let n = shape.iter().product();
            let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
            tensors.insert(name.to_string(), Tensor::new(shape, data));
        };
        for w in ["mix.q", "mix.k", "mix.v"] {
            normal(w, vec![d, d], d);
        }
        normal("mix.conv_w", vec![cfg.conv_kernel, d], cfg.conv_kernel);
        normal("mix.proj", vec![2 * d, d], 2 * d);
        normal("ffn.wi_gate", vec![d, f], d);
        normal("ffn.wi_lin", vec![d, f], d);
        normal("ffn.wo", vec![f, d], f);
        if cfg.head == HeadType::ResiduePairBinary {
            normal("head.wu", vec![d, 1], 2 * d);
            normal("head.wv", vec![d, 1], 2 * d);
        } else {
            normal("head.w", vec![d, out], d);
        }
        for (name, n) in [("mix.conv_b", d), ("mix.proj_b", d), ("head.b", out)] {
            tensors.insert(name.to_string(), Tensor::zeros(vec![n]));
        }
        Ok(Self { tensors })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>, cfg: &ProbeConfig) -> Result<(), DownstreamError> {
        let mut meta = BTreeMap::new();
        meta.insert("probe.head".to_string(), cfg.head.name());
        meta.insert("probe.input_dim".to_string(), cfg.input_dim.to_string());
        let file = TensorFile {
            meta,
            tensors: self.tensors.clone(),
        };
        Ok(file.save(path)?)
    }
}

/// Label for one protein, matching the head type.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Real(f64),
    Class(usize),
    /// Per-residue class; `None` marks a position to ignore.
    Residues(Vec<Option<usize>>),
    /// Row-major `L x L` contact map.
    Contacts(Vec<bool>),
}

/// Head output after its activation.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Real(f64),
    /// Sigmoid probability of the positive class.
    Probability(f64),
    /// Softmax over classes.
    Distribution(Vec<f64>),
    /// One softmax row per residue.
    PerResidue(Vec<Vec<f64>>),
    /// Row-major `L x L` sigmoid contact probabilities.
    Pairs(Vec<f64>),
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct ProbeGraph<'a> {
    g: Graph,
    cfg: &'a ProbeConfig,
    vars: BTreeMap<String, Var>,
    dropout: Option<&'a mut ChaCha8Rng>,
}

impl ProbeGraph<'_> {
    fn dropout(&mut self, x: Var) -> Var {
        let rate = self.cfg.dropout;
        let Some(rng) = self.dropout.as_deref_mut() else {
            return x;
        };
        if rate == 0.0 {
            return x;
        }
        let shape = self.g.value(x).shape().to_vec();
        let n = shape.iter().product();
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.g.mul_const(x, Tensor::new(shape, mask))
    }

    /// Raw head logits.
    fn logits(&mut self, emb: &Tensor) -> Var {
        let len = emb.rows();
        let p = |s: &Self, n: &str| s.vars[n];
        let x = self.g.constant(emb.clone());
        let q = self.g.matmul(x, p(self, "mix.q"));
        let k = self.g.matmul(x, p(self, "mix.k"));
        let v = self.g.matmul(x, p(self, "mix.v"));
        let spec = AttentionSpec {
            batch: 1,
            q_len: len,
            k_len: len,
            heads: self.cfg.n_heads,
            key_mask: vec![true; len],
            causal: false,
            zero_weights: false,
        };
        let attn = self.g.attention(q, k, v, None, spec);
        let conv = self.g.depthwise_conv(x, p(self, "mix.conv_w"), p(self, "mix.conv_b"));
        let mixed = self.g.concat(attn, conv);
        let mixed = self.g.matmul(mixed, p(self, "mix.proj"));
        let mixed = self.g.add_bias(mixed, p(self, "mix.proj_b"));
        let mixed = self.dropout(mixed);
        let h = self.g.add(x, mixed);
        let gate = self.g.matmul(h, p(self, "ffn.wi_gate"));
        let gate = self.g.gelu(gate);
        let lin = self.g.matmul(h, p(self, "ffn.wi_lin"));
        let f = self.g.mul(gate, lin);
        let f = self.dropout(f);
        let f = self.g.matmul(f, p(self, "ffn.wo"));
        let h = self.g.add(h, f);
        match self.cfg.head {
            HeadType::ResiduePairBinary => {
                let u = self.g.matmul(h, p(self, "head.wu"));
                // the bias rides on u; sym_pair counts it exactly once
                let u = self.g.add_bias(u, p(self, "head.b"));
                let v = self.g.matmul(h, p(self, "head.wv"));
                self.g.sym_pair(u, v)
            }
            head => {
                let h = if head.pooled() { self.g.max_rows(h) } else { h };
                let o = self.g.matmul(h, p(self, "head.w"));
                self.g.add_bias(o, p(self, "head.b"))
            }
        }
    }
}

fn check_input(emb: &Tensor, cfg: &ProbeConfig) -> Result<(), DownstreamError> {
    if emb.shape().len() != 2 || emb.shape()[1] != cfg.input_dim || emb.shape()[0] == 0 {
        return Err(DownstreamError::ShapeMismatch {
            expected: format!("[L, {}]", cfg.input_dim),
            found: format!("{:?}", emb.shape()),
        });
    }
    Ok(())
}

/// Inference pass (no dropout).
pub fn probe_forward(emb: &Tensor, cfg: &ProbeConfig, params: &ProbeParams) -> Result<Prediction, DownstreamError> {
    check_input(emb, cfg)?;
    let mut pg = ProbeGraph {
        g: Graph::new(),
        cfg,
        vars: BTreeMap::new(),
        dropout: None,
    };
    for (name, t) in &params.tensors {
        let v = pg.g.constant(t.clone());
        pg.vars.insert(name.clone(), v);
    }
    let out = pg.logits(emb);
    let vals = pg.g.value(out);
    Ok(match cfg.head {
        HeadType::Regression => Prediction::Real(vals.data()[0]),
        HeadType::Binary => Prediction::Probability(sigmoid(vals.data()[0])),
        HeadType::Multiclass(_) => Prediction::Distribution(softmax(vals.data())),
        HeadType::PerResidueMulticlass(k) => Prediction::PerResidue(vals.data().chunks(k).map(softmax).collect()),
        HeadType::ResiduePairBinary => Prediction::Pairs(vals.data().iter().map(|&x| sigmoid(x)).collect()),
    })
}

fn bad_target(cfg: &ProbeConfig, reason: impl Into<String>) -> DownstreamError {
    DownstreamError::BadTarget {
        head: cfg.head.name(),
        reason: reason.into(),
    }
}

fn loss(pg: &mut ProbeGraph, logits: Var, target: &Target, len: usize) -> Result<Var, DownstreamError> {
    let cfg = pg.cfg;
    Ok(match (cfg.head, target) {
        (HeadType::Regression, Target::Real(y)) => pg.g.mse(logits, &[*y]),
        (HeadType::Binary, Target::Class(c)) if *c < 2 => pg.g.bce_with_logits(logits, &[*c as f64], &[true])?,
        (HeadType::Multiclass(k), Target::Class(c)) if c < &k => pg.g.cross_entropy(logits, &[*c], &[true])?,
        (HeadType::PerResidueMulticlass(k), Target::Residues(labels)) => {
            if labels.len() != len || labels.iter().flatten().any(|&c| c >= k) {
                return Err(bad_target(cfg, "label count or class out of range"));
            }
            let targets: Vec<usize> = labels.iter().map(|c| c.unwrap_or(0)).collect();
            let active: Vec<bool> = labels.iter().map(Option::is_some).collect();
            pg.g.cross_entropy(logits, &targets, &active)?
        }
        (HeadType::ResiduePairBinary, Target::Contacts(map)) => {
            if map.len() != len * len {
                return Err(bad_target(cfg, "contact map is not L x L"));
            }
            let targets: Vec<f64> = map.iter().map(|&c| c as u8 as f64).collect();
            let active: Vec<bool> = (0..len * len).map(|ij| ij / len != ij % len).collect();
            pg.g.bce_with_logits(logits, &targets, &active)?
        }
        _ => return Err(bad_target(cfg, format!("{target:?}"))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 1e-3,
            batch_size: 8,
            weight_decay: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub params: ProbeParams,
    /// Held-out score: Spearman rho for regression, contact precision at
    /// L/5 for residue pairs, accuracy otherwise.
    pub metric: f64,
    pub metric_name: &'static str,
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh probe on `(embedding, target)` pairs and scores it on `test`.
pub fn train_probe(
    train: &[(Tensor, Target)],
    test: &[(Tensor, Target)],
    cfg: &ProbeConfig,
    train_cfg: &ProbeTrainConfig,
) -> Result<ProbeResult, DownstreamError> {
    if train.is_empty() {
        return Err(DownstreamError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(DownstreamError::EmptySplit("test"));
    }
    for (e, _) in train.iter().chain(test) {
        check_input(e, cfg)?;
    }
    let mut params = ProbeParams::init(cfg)?;
    let adam = AdamWConfig {
        weight_decay: train_cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut state = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::new();
    for _ in 0..train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(train_cfg.batch_size.max(1)) {
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for &i in chunk {
                let (emb, target) = &train[i];
                let mut pg = ProbeGraph {
                    g: Graph::new(),
                    cfg,
                    vars: BTreeMap::new(),
                    dropout: Some(&mut rng),
                };
                for (name, t) in &params.tensors {
                    let v = pg.g.param(t.clone());
                    pg.vars.insert(name.clone(), v);
                }
                let logits = pg.logits(emb);
                let l = loss(&mut pg, logits, target, emb.rows())?;
                total += pg.g.value(l).item();
                let vars = pg.vars.clone();
                let mut g = pg.g.backward(l)?;
                for (name, v) in vars {
                    if let Some(t) = g.take(v) {
                        match grads.get_mut(&name) {
                            Some(acc) => {
                                for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                                    *a += b;
                                }
                            }
                            None => {
                                grads.insert(name, t);
                            }
                        }
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for t in grads.values_mut() {
                t.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            optimizer_step_tensors(&mut params.tensors, &grads, &mut state, &adam, train_cfg.lr);
        }
        epoch_losses.push(total / train.len() as f64);
    }
    let (metric, metric_name) = evaluate(test, cfg, &params)?;
    Ok(ProbeResult {
        params,
        metric,
        metric_name,
        epoch_losses,
    })
}

fn evaluate(
    test: &[(Tensor, Target)],
    cfg: &ProbeConfig,
    params: &ProbeParams,
) -> Result<(f64, &'static str), DownstreamError> {
    let preds = test
        .iter()
        .map(|(e, _)| probe_forward(e, cfg, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mismatch = |t: &Target| bad_target(cfg, format!("{t:?}"));
    match cfg.head {
        HeadType::Regression => {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (p, (_, t)) in preds.iter().zip(test) {
                match (p, t) {
                    (Prediction::Real(a), Target::Real(b)) => {
                        x.push(*a);
                        y.push(*b);
                    }
                    _ => return Err(mismatch(t)),
                }
            }
            Ok((spearman(&x, &y)?, "spearman"))
        }
        HeadType::Binary | HeadType::Multiclass(_) => {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for (p, (_, t)) in preds.iter().zip(test) {
                let c = match p {
                    Prediction::Probability(q) => (*q >= 0.5) as usize,
                    Prediction::Distribution(d) => argmax(d),
                    _ => unreachable!("protein-level head"),
                };
                let Target::Class(tc) = t else {
                    return Err(mismatch(t));
                };
                pred.push(c);
                truth.push(*tc);
            }
            Ok((q_accuracy(&pred, &truth, None)?, "accuracy"))
        }
        HeadType::PerResidueMulticlass(_) => {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for (p, (_, t)) in preds.iter().zip(test) {
                let (Prediction::PerResidue(rows), Target::Residues(labels)) = (p, t) else {
                    return Err(mismatch(t));
                };
                if labels.len() != rows.len() {
                    return Err(bad_target(cfg, "label count differs from length"));
                }
                pred.extend(rows.iter().map(|r| Some(argmax(r))));
                truth.extend(labels.iter().cloned());
            }
            // Ignored positions carry `None` in the truth.
            Ok((q_accuracy(&pred, &truth, Some(&None))?, "accuracy"))
        }
        HeadType::ResiduePairBinary => {
            let mut sum = 0.0;
            let mut count = 0;
            for (p, (e, t)) in preds.iter().zip(test) {
                let (Prediction::Pairs(scores), Target::Contacts(map)) = (p, t) else {
                    return Err(mismatch(t));
                };
                match contact_precision(scores, map, e.rows(), ContactRatio::L5, CONTACT_MIN_SEPARATION) {
                    Ok(v) => {
                        sum += v;
                        count += 1;
                    }
                    Err(crate::metrics::MetricError::NoEligiblePairs) => {}
                    Err(err) => return Err(err.into()),
                }
            }
            if count == 0 {
                return Err(crate::metrics::MetricError::NoEligiblePairs.into());
            }
            Ok((sum / count as f64, "precision_l5"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(len: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![len, d], (0..len * d).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn output_shapes_and_ranges() {
        let d = 16;
        let e = emb(9, d, 1);
        let run = |head| {
            let cfg = ProbeConfig::new(d, head);
            probe_forward(&e, &cfg, &ProbeParams::init(&cfg).unwrap()).unwrap()
        };
        match run(HeadType::PerResidueMulticlass(3)) {
            Prediction::PerResidue(rows) => {
                assert_eq!(rows.len(), 9);
                for r in rows {
                    assert_eq!(r.len(), 3);
                    assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
            p => panic!("{p:?}"),
        }
        match run(HeadType::Multiclass(5)) {
            Prediction::Distribution(p) => {
                assert_eq!(p.len(), 5);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
            p => panic!("{p:?}"),
        }
        match run(HeadType::Binary) {
            Prediction::Probability(p) => assert!(p > 0.0 && p < 1.0),
            p => panic!("{p:?}"),
        }
        match run(HeadType::ResiduePairBinary) {
            Prediction::Pairs(p) => {
                assert_eq!(p.len(), 81);
                for i in 0..9 {
                    for j in 0..9 {
                        assert_eq!(p[i * 9 + j], p[j * 9 + i]);
                    }
                }
            }
            p => panic!("{p:?}"),
        }
        assert!(matches!(run(HeadType::Regression), Prediction::Real(_)));
    }

    #[test]
    fn config_rules() {
        let mut cfg = ProbeConfig::new(16, HeadType::Binary);
        assert_eq!(cfg.ffn_dim, 8);
        cfg.conv_kernel = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = ProbeConfig::new(16, HeadType::Binary);
        cfg.ffn_dim = 9;
        assert!(cfg.validate().is_err());
        assert_eq!(HeadType::parse("multiclass:10"), Some(HeadType::Multiclass(10)));
        assert_eq!(HeadType::parse(&HeadType::ResiduePairBinary.name()), Some(HeadType::ResiduePairBinary));
        assert_eq!(HeadType::parse("multiclass"), None);
    }

    #[test]
    fn shape_mismatch_and_empty_split() {
        let cfg = ProbeConfig::new(16, HeadType::Binary);
        let params = ProbeParams::init(&cfg).unwrap();
        assert!(matches!(
            probe_forward(&emb(4, 8, 0), &cfg, &params),
            Err(DownstreamError::ShapeMismatch { .. })
        ));
        let data = vec![(emb(4, 16, 0), Target::Class(1))];
        assert!(matches!(
            train_probe(&[], &data, &cfg, &ProbeTrainConfig::default()),
            Err(DownstreamError::EmptySplit("train"))
        ));
        assert!(matches!(
            train_probe(&data, &[], &cfg, &ProbeTrainConfig::default()),
            Err(DownstreamError::EmptySplit("test"))
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = ProbeConfig::new(16, HeadType::Multiclass(3));
        let params = ProbeParams::init(&cfg).unwrap();
        let e = emb(12, 16, 3);
        assert_eq!(probe_forward(&e, &cfg, &params).unwrap(), probe_forward(&e, &cfg, &params).unwrap());
    }
}
