//! Experiment runner: TOML configs, ablation presets, the
//! pretrain/probe/report pipeline and artifact persistence.

mod config;
mod report;
mod run;

pub use config::{
    preset, CorruptionSection, ExperimentConfig, GenerationSection, ProbeSection, TaskConfig, TaskKind,
    TrainingSection, PRESET_IDS, SCHEMA_VERSION,
};
pub use report::{emit_report, parse_report_tsv, render_report, MetricReport, ParsedReport, ReportFormat, TaskScore};
pub use run::{
    checkpoint_roundtrip, evaluate_sets, evaluate_task, evaluate_tasks, load_records, pretrain,
    run_experiment, run_family_generation, run_infill, run_matrix, SetEvaluation,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{stage} failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("config schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("experiment id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("no results to report")]
    EmptyReport,
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Pipeline stage for error messages.
    pub fn stage(&self) -> &'static str {
        match self {
            HarnessError::Stage { stage, .. } => stage,
            HarnessError::Config(_) | HarnessError::SchemaVersion { .. } | HarnessError::MissingFile(_) => "config",
            HarnessError::DuplicateId(_) => "matrix",
            HarnessError::EmptyReport => "report",
            HarnessError::Io { .. } => "io",
        }
    }
}
