use std::collections::HashSet;

use super::beam::{beam_search, BeamConfig, Seq2SeqStepper};
use super::{GenerationConfig, GenerationError};
use crate::corpus::{SequenceRecord, TokenId, Vocabulary, EOS_ID};
use crate::model::{ModelConfig, ParamGroup, ParameterStore};
use crate::training::{fit, Objective, TrainConfig, TrainingLog};

/// Auto-regressive fine-tuning on a family with the encoder side frozen.
pub fn finetune_family(
    config: &ModelConfig,
    params: &mut ParameterStore,
    family: &[SequenceRecord],
    gen: &GenerationConfig,
    train: &TrainConfig,
) -> Result<TrainingLog, GenerationError> {
    gen.validate()?;
    let objective = Objective::Autoregressive {
        prompt_length: gen.prompt_length,
    };
    Ok(fit(config, params, family, &objective, &[ParamGroup::Encoder], train)?)
}

/// FASTA header for one generated variant, e.g. `gen|t1.5|e2|b0|pfam7`.
pub fn generation_header(temperature: f64, epoch: usize, beam_rank: usize, prompt_id: &str) -> String {
    format!("gen|t{temperature}|e{epoch}|b{beam_rank}|p{prompt_id}")
}

/// Keeps residues and eos only.
pub(crate) fn residue_only(_: &[TokenId], logits: &mut [f64]) {
    let vocab = Vocabulary::new();
    for (t, l) in logits.iter_mut().enumerate() {
        if t != EOS_ID && !vocab.is_residue(t) {
            *l = f64::NEG_INFINITY;
        }
    }
}

/// Continues the first `prompt_length` residues of every prompt record.
/// Each prompt yields up to `num_beams` variants, best first; a variant is
/// the prompt followed by the decoded residues.
pub fn generate_family(
    config: &ModelConfig,
    params: &ParameterStore,
    prompts: &[SequenceRecord],
    gen: &GenerationConfig,
    epoch: usize,
) -> Result<Vec<SequenceRecord>, GenerationError> {
    gen.validate()?;
    let vocab = Vocabulary::new();
    let mut out = Vec::new();
    for rec in prompts {
        let ids = vocab.encode(&rec.sequence)?;
        let prompt = &ids[..ids.len().min(gen.prompt_length)];
        let mut input = prompt.to_vec();
        input.push(EOS_ID);
        let stepper = Seq2SeqStepper::new(config, params, &input)?;
        let beam = BeamConfig {
            num_beams: gen.num_beams,
            temperature: gen.temperature,
            max_steps: (gen.max_length - prompt.len()).min(config.max_length),
            eos: Some(EOS_ID),
        };
        let hyps = beam_search(&stepper, &beam, &residue_only)?;
        for (rank, h) in hyps.iter().enumerate() {
            let body: Vec<TokenId> = prompt
                .iter()
                .chain(h.tokens.iter().filter(|&&t| t != EOS_ID))
                .copied()
                .collect();
            let header = generation_header(gen.temperature, epoch, rank, &rec.id);
            out.push(SequenceRecord::new(header, vocab.decode(&body)?)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// 1.0 when nothing was generated.
    pub unique_fraction: f64,
    /// Ids of generated records that repeat a reference or earlier sequence.
    pub duplicates: Vec<String>,
}

pub fn uniqueness_report(generated: &[SequenceRecord], reference: &[SequenceRecord]) -> UniquenessReport {
    let mut seen: HashSet<&str> = reference.iter().map(|r| r.sequence.as_str()).collect();
    let mut duplicates = Vec::new();
    for g in generated {
        if !seen.insert(g.sequence.as_str()) {
            duplicates.push(g.id.clone());
        }
    }
    let unique_fraction = if generated.is_empty() {
        1.0
    } else {
        (generated.len() - duplicates.len()) as f64 / generated.len() as f64
    };
    UniquenessReport {
        unique_fraction,
        duplicates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Precision;

    fn recs(seqs: &[&str]) -> Vec<SequenceRecord> {
        seqs.iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(format!("r{i}"), *s).unwrap())
            .collect()
    }

    #[test]
    fn uniqueness_arithmetic() {
        let reference = recs(&["MKV", "AAA"]);
        assert_eq!(uniqueness_report(&recs(&["CCC", "DDD"]), &reference).unique_fraction, 1.0);
        assert_eq!(uniqueness_report(&recs(&["AAA", "MKV"]), &reference).unique_fraction, 0.0);
        let r = uniqueness_report(&recs(&["CCC", "MKV", "DDD"]), &reference);
        assert!((r.unique_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.duplicates, vec!["r1".to_string()]);
        let r = uniqueness_report(&recs(&["CCC", "CCC"]), &[]);
        assert_eq!(r.unique_fraction, 0.5);
    }

    #[test]
    fn header_format() {
        assert_eq!(generation_header(1.0, 1, 0, "x"), "gen|t1|e1|b0|px");
        assert_eq!(generation_header(1.5, 2, 3, "fam"), "gen|t1.5|e2|b3|pfam");
    }

    #[test]
    fn variants_are_residue_strings_starting_with_the_prompt() {
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 16,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            ..ModelConfig::toy()
        };
        let params = ParameterStore::init(&cfg, Precision::Single).unwrap();
        let gen = GenerationConfig {
            num_beams: 3,
            max_length: 12,
            prompt_length: 5,
            ..GenerationConfig::default()
        };
        let prompts = recs(&["MKVLAGHHW", "ACD"]);
        let out = generate_family(&cfg, &params, &prompts, &gen, 1).unwrap();
        assert_eq!(out.len(), 6);
        for v in &out[..3] {
            assert!(v.sequence.starts_with("MKVLA"));
            assert!(v.len() <= 12);
            assert!(v.id.starts_with("gen|t1|e1|b"));
        }
        for v in &out[3..] {
            assert!(v.sequence.starts_with("ACD"));
        }
        let again = generate_family(&cfg, &params, &prompts, &gen, 1).unwrap();
        assert_eq!(out, again);
    }
}
