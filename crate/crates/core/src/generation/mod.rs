//! Beam-search decoding for frozen-encoder family generation and one-shot
//! masked infilling.

mod beam;
mod family;
mod infill;

pub use beam::{beam_search, warp_logits, BeamConfig, Hypothesis, Seq2SeqStepper, StepModel};
pub use family::{finetune_family, generate_family, generation_header, uniqueness_report, UniquenessReport};
pub use infill::{infill_pair, mlm_infill};

use crate::corpus::CorpusError;
use crate::corruption::CorruptionError;
use crate::model::ModelError;
use crate::training::TrainingError;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub num_beams: usize,
    pub temperature: f64,
    /// Upper bound on decoded tokens.
    pub max_length: usize,
    /// Residues of each seed sequence handed to the encoder.
    pub prompt_length: usize,
    /// Infilling only.
    pub mask_probability: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            num_beams: 10,
            temperature: 1.0,
            max_length: 256,
            prompt_length: 20,
            mask_probability: 0.5,
            seed: 42,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature > 0.0) {
            return Err(GenerationError::NonPositiveTemperature(self.temperature));
        }
        let fail = |m: &str| Err(GenerationError::InvalidConfig(m.to_string()));
        if self.num_beams == 0 {
            return fail("num_beams must be at least 1");
        }
        if self.max_length == 0 || self.prompt_length > self.max_length {
            return fail("prompt_length must not exceed max_length, which must be positive");
        }
        Ok(())
    }
}
