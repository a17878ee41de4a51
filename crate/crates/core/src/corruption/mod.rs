//! Span-corruption masking strategies.
//!
//! A [`CorruptionSpec`] turns a residue token sequence into a [`MaskedPair`]
//! of encoder input, decoder target and per-target loss mask. Strategies
//! differ in two independent ways: how positions are selected (uniform,
//! coverage-first, or coverage-first with a 3-token window) and how the
//! input/target are laid out around sentinel tokens.
//!
//! ```text
//! seq      A B C D E F G        masked {C, G}
//! S0       in: A B <s0> D E F <s1>   out: A B C D E F G
//! S4       in: A B <s0> D E F <s1>   out: <s0> C <s1> G
//! S6 lit.  in: A B <s0> D E F <s1>   out: <s0> <s1> <s2> <s3>
//! ```

mod pair;
mod select;

use serde::{Deserialize, Serialize};

pub use pair::{build_pair, invert, splice_span_target, MaskedPair};
pub use select::{mask_count, select_indices};

use crate::corpus::TokenId;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CorruptionError {
    #[error("masking probability {0} outside (0, 1)")]
    InvalidProbability(String),
    #[error("mask index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("target of a {0:?} pair carries no residue content")]
    NotInvertible(Strategy),
    #[error("target sentinel structure disagrees with the input: {0}")]
    SpliceMismatch(String),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

/// Masking strategy; `S0`..`S6` follow the ablation numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Uniform 1-gram masking, full reconstruction.
    S0,
    /// Coverage-first 1-gram masking, full reconstruction.
    S1,
    /// Coverage-first masking widened to 3-grams, full reconstruction.
    S2,
    /// As S1, with loss only on masked positions.
    S3,
    /// Uniform 1-gram masking, unmasked runs collapsed to sentinels in the target.
    S4,
    /// Coverage-first selection with the S4 layout.
    S5,
    /// Masked runs collapsed in the input, every run collapsed in the target.
    S6Literal,
    /// Masked runs collapsed in the input, masked content kept in the target.
    S6Span,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::S0,
        Strategy::S1,
        Strategy::S2,
        Strategy::S3,
        Strategy::S4,
        Strategy::S5,
        Strategy::S6Literal,
        Strategy::S6Span,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::S0 => "S0",
            Strategy::S1 => "S1",
            Strategy::S2 => "S2",
            Strategy::S3 => "S3",
            Strategy::S4 => "S4",
            Strategy::S5 => "S5",
            Strategy::S6Literal => "S6_literal",
            Strategy::S6Span => "S6_span",
        }
    }

    pub(crate) fn selection(self) -> Selection {
        match self {
            Strategy::S0 | Strategy::S4 | Strategy::S6Literal | Strategy::S6Span => {
                Selection::Uniform
            }
            Strategy::S1 | Strategy::S3 | Strategy::S5 => Selection::CoverageFirst,
            Strategy::S2 => Selection::CoverageTrigram,
        }
    }

    /// True when the input carries one sentinel per masked position.
    pub fn per_position_input(self) -> bool {
        !matches!(self, Strategy::S6Literal | Strategy::S6Span)
    }
}

impl std::str::FromStr for Strategy {
    type Err = CorruptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CorruptionError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Selection {
    Uniform,
    CoverageFirst,
    CoverageTrigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub strategy: Strategy,
    pub probability: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(strategy: Strategy, probability: f64, seed: u64) -> Result<Self, CorruptionError> {
        let spec = Self {
            strategy,
            probability,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorruptionError> {
        if self.probability > 0.0 && self.probability < 1.0 {
            Ok(())
        } else {
            Err(CorruptionError::InvalidProbability(self.probability.to_string()))
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Selects positions with a generator seeded from `spec.seed` and builds the pair.
pub fn corrupt(seq: &[TokenId], spec: &CorruptionSpec) -> Result<MaskedPair, CorruptionError> {
    use rand::SeedableRng;
    spec.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let indices = select_indices(seq, spec, &mut rng)?;
    build_pair(seq, &indices, spec.strategy)
}
