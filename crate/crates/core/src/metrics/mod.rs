//! Evaluation metrics: column entropy, global alignment identity, Kabsch
//! RMSD, contact precision, per-residue accuracy and rank correlation.

mod align;
mod contact;
mod entropy;
mod rmsd;
mod stats;

pub use align::{global_identity, internal_identity, AlignmentResult, IdentityDenominator, IdentitySummary, Scoring};
pub use contact::{contact_precision, contacts_from_coords, ContactRatio};
pub use entropy::{entropy_mse, shannon_profile, EntropyProfile, GAP};
pub use rmsd::kabsch_rmsd;
pub use stats::{q_accuracy, spearman};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("alignment rows have unequal lengths ({0} vs {1})")]
    RaggedAlignment(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptySequence,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("point set is degenerate: {0}")]
    DegenerateConfiguration(String),
    #[error("no residue pairs pass the separation filter")]
    NoEligiblePairs,
    #[error("correlation undefined for constant input")]
    ConstantInput,
}
