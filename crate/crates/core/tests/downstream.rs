use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanforge::autograd::Tensor;
use spanforge::downstream::{
    knn_transfer, probe_forward, train_probe, EatIndex, EatLabels, HeadType, ProbeConfig, ProbeParams,
    ProbeTrainConfig, Target,
};
use spanforge::model::{extract_embeddings, ModelConfig, ParameterStore, Pooling, Precision};

fn labels(i: usize) -> EatLabels {
    std::array::from_fn(|l| format!("{}.{l}", i % 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nearest_neighbour_survives_scaling(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 2..30),
        queries in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..10),
        scale in 0.01f64..100.0,
    ) {
        let lab: Vec<EatLabels> = (0..pts.len()).map(labels).collect();
        let index = EatIndex::new(pts.clone(), lab.clone()).unwrap();
        let scaled = EatIndex::new(pts.iter().map(|p| p.iter().map(|v| v * scale).collect()).collect(), lab).unwrap();
        let sq: Vec<Vec<f64>> = queries.iter().map(|p| p.iter().map(|v| v * scale).collect()).collect();
        prop_assert_eq!(knn_transfer(&queries, &index, 1).unwrap(), knn_transfer(&sq, &scaled, 1).unwrap());
    }
}

#[test]
fn probe_forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let emb = Tensor::new(vec![9, 8], (0..72).map(|_| rng.random_range(-1.0..1.0)).collect());
    for head in [
        HeadType::Regression,
        HeadType::Binary,
        HeadType::Multiclass(4),
        HeadType::PerResidueMulticlass(3),
        HeadType::ResiduePairBinary,
    ] {
        let cfg = ProbeConfig::new(8, head);
        let params = ProbeParams::init(&cfg).unwrap();
        assert_eq!(probe_forward(&emb, &cfg, &params).unwrap(), probe_forward(&emb, &cfg, &params).unwrap());
    }
    let bad = Tensor::new(vec![3, 5], vec![0.0; 15]);
    let cfg = ProbeConfig::new(8, HeadType::Binary);
    assert!(probe_forward(&bad, &cfg, &ProbeParams::init(&cfg).unwrap()).is_err());
}

#[test]
fn probe_training_leaves_the_language_model_alone() {
    let cfg = ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        d_ff: 16,
        ..ModelConfig::toy()
    };
    let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
    let before = params.fingerprint(|_| true);
    let recs = [
        spanforge::corpus::SequenceRecord::new("a", "MKVLAGHW").unwrap(),
        spanforge::corpus::SequenceRecord::new("b", "WWPPEERR").unwrap(),
    ];
    let emb = extract_embeddings(&recs, &cfg, &params, Pooling::None).unwrap();
    let data: Vec<(Tensor, Target)> = emb.iter().enumerate().map(|(i, e)| (e.values.clone(), Target::Class(i))).collect();
    let probe = ProbeConfig::new(16, HeadType::Binary);
    let train = ProbeTrainConfig { epochs: 3, ..ProbeTrainConfig::default() };
    let r = train_probe(&data, &data, &probe, &train).unwrap();
    assert_eq!(r.epoch_losses.len(), 3);
    assert_eq!(params.fingerprint(|_| true), before);
}

#[test]
fn probe_training_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<(Tensor, Target)> = (0..12)
        .map(|i| {
            let t = Tensor::new(vec![5, 8], (0..40).map(|_| rng.random_range(-1.0..1.0)).collect());
            (t, Target::Real(i as f64))
        })
        .collect();
    let cfg = ProbeConfig::new(8, HeadType::Regression);
    let train = ProbeTrainConfig { epochs: 2, ..ProbeTrainConfig::default() };
    let a = train_probe(&data, &data, &cfg, &train).unwrap();
    let b = train_probe(&data, &data, &cfg, &train).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.metric, b.metric);
    assert_eq!(a.metric_name, "spearman");
}
