use proptest::prelude::*;
use spanforge::corpus::{SequenceRecord, Vocabulary};
use spanforge::model::{
    encoder_forward, extract_embeddings, load_checkpoint, save_checkpoint, seq2seq_logits, Activation, Batch,
    Dropout, Forward, ModelConfig, ParameterStore, Pooling, Precision,
};

fn small(activation: Activation, enc: usize, dec: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_encoder_layers: enc,
        n_decoder_layers: dec,
        d_ff: 24,
        activation,
        ..ModelConfig::toy()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn parameter_count_depends_only_on_config(
        enc in 0usize..4,
        dec in 1usize..4,
        heads in prop::sample::select(vec![1usize, 2, 4]),
        d_ff in 4usize..40,
        buckets in prop::sample::select(vec![16usize, 32, 64]),
        gated in any::<bool>(),
        tied in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = ModelConfig {
            n_heads: heads,
            d_ff,
            relpos_num_embeddings: buckets,
            tie_decoder_embedding: tied,
            seed,
            ..small(if gated { Activation::GatedGelu } else { Activation::Relu }, enc, dec)
        };
        let store = ParameterStore::init(&cfg, Precision::Single).unwrap();
        prop_assert_eq!(store.num_parameters(), ParameterStore::count_for(&cfg));
        let other = ParameterStore::init(&ModelConfig { seed: seed ^ 1, ..cfg.clone() }, Precision::Single).unwrap();
        prop_assert_eq!(other.num_parameters(), store.num_parameters());
    }
}

#[test]
fn feed_forward_width_follows_activation() {
    let gated = small(Activation::GatedGelu, 2, 2);
    let relu = small(Activation::Relu, 2, 2);
    let diff = ParameterStore::count_for(&gated) - ParameterStore::count_for(&relu);
    assert_eq!(diff, 4 * gated.d_model * gated.d_ff);
}

#[test]
fn zero_attention_isolates_positions() {
    let cfg = small(Activation::GatedGelu, 2, 1);
    let params = ParameterStore::init(&cfg, Precision::Double).unwrap();
    let vocab = Vocabulary::new();
    let a = vocab.encode("MKVLAGHW").unwrap();
    let mut b = a.clone();
    b[5] = vocab.residue_id('C').unwrap();
    let states = |ids: &[usize], zero: bool| {
        let mut fwd = Forward::inference(&cfg, &params);
        if zero {
            fwd = fwd.with_zero_attention();
        }
        let v = fwd.encode(&Batch::single(ids).unwrap()).unwrap();
        fwd.graph.value(v).clone()
    };
    let (za, zb) = (states(&a, true), states(&b, true));
    for i in 0..a.len() {
        if i == 5 {
            assert_ne!(za.row(i), zb.row(i));
        } else {
            assert_eq!(za.row(i), zb.row(i), "position {i}");
        }
    }
    // with attention on, the change leaks to other positions
    let (fa, fb) = (states(&a, false), states(&b, false));
    assert_ne!(fa.row(0), fb.row(0));
}

#[test]
fn forward_is_deterministic_without_dropout() {
    let cfg = small(Activation::GatedGelu, 1, 1);
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let vocab = Vocabulary::new();
    let input = Batch::from_sequences(&[vocab.encode("ACDEF").unwrap(), vocab.encode("GH").unwrap()]).unwrap();
    let dec = Batch::from_sequences(&[vec![0, 3, 4], vec![0, 5, 6]]).unwrap();
    let x = seq2seq_logits(&input, &dec, &cfg, &params).unwrap();
    let y = seq2seq_logits(&input, &dec, &cfg, &params).unwrap();
    assert_eq!(x, y);
    assert_eq!(x.shape(), &[2, 3, cfg.vocab_size]);

    let noisy = |seed| {
        let mut fwd = Forward::training(&cfg, &params, |_| false, Some(Dropout::new(0.5, seed)));
        let v = fwd.encode(&input).unwrap();
        fwd.graph.value(v).clone()
    };
    assert_eq!(noisy(1), noisy(1));
    assert_ne!(noisy(1), noisy(2));
}

#[test]
fn checkpoint_preserves_embeddings() {
    let cfg = small(Activation::Relu, 2, 1);
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &cfg, &params).unwrap();
    let (cfg2, params2) = load_checkpoint(&path).unwrap();
    let recs = [SequenceRecord::new("a", "MKVLAGHW").unwrap(), SequenceRecord::new("b", "WPER").unwrap()];
    let before = extract_embeddings(&recs, &cfg, &params, Pooling::Mean).unwrap();
    let after = extract_embeddings(&recs, &cfg2, &params2, Pooling::Mean).unwrap();
    assert_eq!(before, after);
    let hidden = encoder_forward(&Batch::single(&[2, 3, 4]).unwrap(), &cfg2, &params2).unwrap();
    assert_eq!(hidden.states.shape(), &[1, 3, cfg.d_model]);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let cfg = small(Activation::Relu, 1, 1);
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &cfg, &params).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
