use super::beam::{beam_search, BeamConfig, Seq2SeqStepper};
use super::{GenerationConfig, GenerationError};
use crate::corpus::{SequenceRecord, TokenId, Vocabulary, EOS_ID};
use crate::corruption::{corrupt, splice_span_target, CorruptionSpec, MaskedPair, Strategy};
use crate::model::{ModelConfig, ParameterStore};

/// Target layout implied by a per-position-sentinel input: `Some(t)` fixes
/// the token, `None` admits any residue.
fn target_template(input: &[TokenId]) -> Vec<Option<TokenId>> {
    let vocab = Vocabulary::new();
    let mut out = Vec::with_capacity(input.len() + 1);
    let mut k = 0;
    let mut in_run = false;
    for &t in input.iter().take_while(|&&t| t != EOS_ID) {
        if vocab.is_sentinel(t) {
            out.push(None);
            in_run = false;
        } else if !in_run {
            out.push(Some(vocab.sentinel_id(k)));
            k += 1;
            in_run = true;
        }
    }
    out.push(Some(EOS_ID));
    out
}

/// Decodes the target of an S4 pair under its template and splices each
/// beam back into a full sequence, best first.
pub fn infill_pair(
    config: &ModelConfig,
    params: &ParameterStore,
    pair: &MaskedPair,
    gen: &GenerationConfig,
) -> Result<Vec<Vec<TokenId>>, GenerationError> {
    gen.validate()?;
    let vocab = Vocabulary::new();
    let template = target_template(&pair.input_ids);
    let constrain = |prefix: &[TokenId], logits: &mut [f64]| {
        let slot = template.get(prefix.len()).copied().flatten();
        let free = template.get(prefix.len()).is_some_and(Option::is_none);
        for (t, l) in logits.iter_mut().enumerate() {
            let allowed = if free { vocab.is_residue(t) } else { Some(t) == slot };
            if !allowed {
                *l = f64::NEG_INFINITY;
            }
        }
    };
    let stepper = Seq2SeqStepper::new(config, params, &pair.input_ids)?;
    let beam = BeamConfig {
        num_beams: gen.num_beams,
        temperature: gen.temperature,
        max_steps: template.len(),
        eos: Some(EOS_ID),
    };
    beam_search(&stepper, &beam, &constrain)?
        .iter()
        .map(|h| Ok(splice_span_target(&pair.input_ids, &h.tokens)?))
        .collect()
}

/// One-shot variants of `record`: S4 corruption at `mask_probability`, then
/// constrained beam decoding of the masked residues. Ids read
/// `{id}|infill|t{temperature}|b{rank}`.
pub fn mlm_infill(
    config: &ModelConfig,
    params: &ParameterStore,
    record: &SequenceRecord,
    gen: &GenerationConfig,
) -> Result<Vec<SequenceRecord>, GenerationError> {
    gen.validate()?;
    let vocab = Vocabulary::new();
    let ids = vocab.encode(&record.sequence)?;
    let spec = CorruptionSpec::new(Strategy::S4, gen.mask_probability, gen.seed)?;
    let pair = corrupt(&ids, &spec)?;
    infill_pair(config, params, &pair, gen)?
        .into_iter()
        .enumerate()
        .map(|(rank, v)| {
            let id = format!("{}|infill|t{}|b{rank}", record.id, gen.temperature);
            Ok(SequenceRecord::new(id, vocab.decode(&v)?)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::build_pair;
    use crate::model::Precision;

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 16,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            ..ModelConfig::toy()
        }
    }

    #[test]
    fn template_matches_real_targets() {
        let vocab = Vocabulary::new();
        let seq = vocab.encode("MKVLAGHHWPER").unwrap();
        for idx in [vec![0], vec![3, 4, 9], vec![11], vec![0, 1, 2, 5, 7, 11]] {
            let pair = build_pair(&seq, &idx, Strategy::S4).unwrap();
            let tpl = target_template(&pair.input_ids);
            assert_eq!(tpl.len(), pair.target_ids.len());
            for (slot, &t) in tpl.iter().zip(&pair.target_ids) {
                match slot {
                    Some(f) => assert_eq!(*f, t),
                    None => assert!(vocab.is_residue(t)),
                }
            }
        }
    }

    #[test]
    fn no_masks_is_identity() {
        let cfg = small();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let seq = Vocabulary::new().encode("MKVLAGH").unwrap();
        let pair = build_pair(&seq, &[], Strategy::S4).unwrap();
        let out = infill_pair(&cfg, &params, &pair, &GenerationConfig::default()).unwrap();
        assert_eq!(out, vec![seq]);
    }

    #[test]
    fn unmasked_residues_survive() {
        let cfg = small();
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let rec = SequenceRecord::new("q", "MKVLAGHHWPERTYIKACDE").unwrap();
        let gen = GenerationConfig {
            num_beams: 4,
            ..GenerationConfig::default()
        };
        let seq = Vocabulary::new().encode(&rec.sequence).unwrap();
        let pair = corrupt(&seq, &CorruptionSpec::new(Strategy::S4, 0.5, gen.seed).unwrap()).unwrap();
        let out = mlm_infill(&cfg, &params, &rec, &gen).unwrap();
        assert_eq!(out.len(), 4);
        for v in &out {
            assert_eq!(v.len(), rec.len());
            for (i, (a, b)) in v.sequence.bytes().zip(rec.sequence.bytes()).enumerate() {
                if !pair.mask_positions.contains(&i) {
                    assert_eq!(a, b);
                }
            }
        }
    }
}
