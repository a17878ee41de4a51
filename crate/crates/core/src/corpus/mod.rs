//! Tokenization and ingestion of sequence, label and coordinate files.

mod coords;
mod fasta;
mod labels;
mod vocab;

use std::path::PathBuf;

pub use coords::{parse_coords, parse_coords_str, Point3};
pub use fasta::{
    parse_fasta, parse_fasta_str, read_fasta_entries, write_fasta, write_fasta_string,
};
pub use labels::{attach_labels, parse_labels, parse_labels_str, LabelKind};
pub use vocab::{TokenId, Vocabulary, EOS_ID, NUM_SENTINELS, PAD_ID, RESIDUES};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("empty sequence")]
    EmptyInput,
    #[error("unknown residue symbol {symbol:?} at position {position}")]
    UnknownSymbol { symbol: char, position: usize },
    #[error("token id {id} at position {position} is not a residue")]
    NotAResidue { id: TokenId, position: usize },
    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no C-alpha atoms found")]
    NoCaAtoms,
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-record annotation.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    PerProtein(String),
    /// One label character per residue.
    PerResidue(String),
}

/// An identified amino-acid sequence with optional labels and C-alpha trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub sequence: String,
    pub labels: Option<Labels>,
    pub coords: Option<Vec<Point3>>,
}

impl SequenceRecord {
    /// Builds a record, validating the residue alphabet and `L >= 1`.
    pub fn new(id: impl Into<String>, sequence: impl Into<String>) -> Result<Self, CorpusError> {
        let record = Self {
            id: id.into(),
            sequence: sequence.into(),
            labels: None,
            coords: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn with_coords(mut self, coords: Vec<Point3>) -> Result<Self, CorpusError> {
        self.coords = Some(coords);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        Vocabulary::new()
            .encode(&self.sequence)
            .map_err(|e| invalid(e.to_string()))?;
        if let Some(coords) = &self.coords {
            if coords.len() != self.len() {
                return Err(invalid(format!(
                    "{} coordinates for {} residues",
                    coords.len(),
                    self.len()
                )));
            }
        }
        if let Some(Labels::PerResidue(l)) = &self.labels {
            if l.chars().count() != self.len() {
                return Err(invalid(format!(
                    "per-residue label string has length {}, sequence has {}",
                    l.chars().count(),
                    self.len()
                )));
            }
        }
        Ok(())
    }

    /// Truncates to at most `max_residues`, logging a warning when it cuts.
    pub fn truncated(mut self, max_residues: usize) -> Self {
        if self.len() > max_residues {
            log::warn!(
                "truncating {} from {} to {} residues",
                self.id,
                self.len(),
                max_residues
            );
            self.sequence.truncate(max_residues);
            if let Some(c) = &mut self.coords {
                c.truncate(max_residues);
            }
            if let Some(Labels::PerResidue(l)) = &mut self.labels {
                l.truncate(max_residues);
            }
        }
        self
    }
}
