mod common;

use proptest::prelude::*;
use spanforge::corpus::{SequenceRecord, TokenId, Vocabulary};
use spanforge::corruption::build_pair;
use spanforge::corruption::Strategy as Masking;
use spanforge::generation::{
    beam_search, generate_family, infill_pair, mlm_infill, uniqueness_report, warp_logits, BeamConfig,
    GenerationConfig, GenerationError, StepModel,
};
use spanforge::model::{ModelConfig, ParameterStore, Precision};

/// Logits drawn from a hash of the prefix, so every path differs.
struct Hashed {
    vocab: usize,
    salt: u64,
}

impl StepModel for Hashed {
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn next_logits(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, GenerationError> {
        Ok(prefixes
            .iter()
            .map(|p| {
                (0..self.vocab)
                    .map(|t| {
                        let mut h = self.salt ^ 0x9e37_79b9_7f4a_7c15;
                        for &x in p.iter().chain([&t]) {
                            h = (h ^ x as u64).wrapping_mul(0x0100_0000_01b3).rotate_left(17);
                        }
                        (h % 10_000) as f64 / 1000.0
                    })
                    .collect()
            })
            .collect())
    }
}

fn small() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        d_ff: 16,
        ..ModelConfig::toy()
    }
}

proptest! {
    #[test]
    fn warping_keeps_argmax(logits in prop::collection::vec(-20.0f64..20.0, 1..100), t in 0.01f64..10.0) {
        let w = warp_logits(&logits, t).unwrap();
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        prop_assert_eq!(argmax(&w), argmax(&logits));
    }

    #[test]
    fn beam_scores_never_increase(salt in any::<u64>(), beams in 1usize..6, steps in 1usize..6, eos in prop::option::of(0usize..5)) {
        let model = Hashed { vocab: 5, salt };
        let cfg = BeamConfig { num_beams: beams, temperature: 1.3, max_steps: steps, eos };
        let hyps = beam_search(&model, &cfg, &|_, _| {}).unwrap();
        prop_assert!(!hyps.is_empty() && hyps.len() <= beams);
        prop_assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(hyps.iter().all(|h| h.tokens.len() <= steps && h.score <= 0.0));
    }
}

#[test]
fn non_positive_temperature_is_rejected() {
    assert!(warp_logits(&[1.0, 2.0], 0.0).is_err());
    assert!(warp_logits(&[1.0, 2.0], -1.0).is_err());
    let cfg = GenerationConfig {
        temperature: 0.0,
        ..GenerationConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn infilling_without_masks_is_identity() {
    let cfg = small();
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let vocab = Vocabulary::new();
    let seq = vocab.encode("MKVLAGHWPER").unwrap();
    let pair = build_pair(&seq, &[], Masking::S4).unwrap();
    let out = infill_pair(&cfg, &params, &pair, &GenerationConfig::default()).unwrap();
    assert!(!out.is_empty());
    assert!(out.iter().all(|v| *v == seq));
}

#[test]
fn mlm_infill_records_keep_context() {
    let cfg = small();
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let rec = SequenceRecord::new("p1", "MKVLAGHWPERTYIKLMN").unwrap();
    let gen = GenerationConfig {
        num_beams: 4,
        ..GenerationConfig::default()
    };
    let out = mlm_infill(&cfg, &params, &rec, &gen).unwrap();
    assert_eq!(out.len(), 4);
    for (rank, r) in out.iter().enumerate() {
        assert_eq!(r.sequence.len(), rec.sequence.len());
        assert!(r.id.starts_with("p1|infill|t1|b"), "{}", r.id);
        assert!(r.id.ends_with(&format!("b{rank}")));
    }
    assert_eq!(out, mlm_infill(&cfg, &params, &rec, &gen).unwrap());
}

#[test]
fn family_generation_is_seeded_and_prefixed() {
    let cfg = small();
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let prompts = common::random_corpus(3, 25, 30, 2);
    let gen = GenerationConfig {
        num_beams: 3,
        max_length: 30,
        prompt_length: 10,
        temperature: 1.5,
        ..GenerationConfig::default()
    };
    let a = generate_family(&cfg, &params, &prompts, &gen, 1).unwrap();
    assert_eq!(a, generate_family(&cfg, &params, &prompts, &gen, 1).unwrap());
    for v in &a {
        let prompt = prompts.iter().find(|p| v.id.ends_with(&format!("|p{}", p.id))).unwrap();
        assert!(v.sequence.starts_with(&prompt.sequence[..10]));
        assert!(v.sequence.len() <= 30);
        assert!(v.id.starts_with("gen|t1.5|e1|b"));
    }
    let report = uniqueness_report(&a, &prompts);
    assert!((0.0..=1.0).contains(&report.unique_fraction));
}
