use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corruption::{CorruptionSpec, Strategy};
use crate::downstream::{ProbeConfig, ProbeTrainConfig};
use crate::model::{Activation, ModelConfig};
use crate::training::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    /// `S0`..`S5`, `S6_literal` or `S6_span`.
    pub strategy: String,
    pub probability: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionSection {
    pub fn spec(&self) -> Result<CorruptionSpec, HarnessError> {
        let strategy: Strategy = self
            .strategy
            .parse()
            .map_err(|e: crate::corruption::CorruptionError| HarnessError::Config(e.to_string()))?;
        CorruptionSpec::new(strategy, self.probability, self.seed).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub max_steps: Option<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    pub order_seed: u64,
    pub dropout: Option<f64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            peak_lr: t.peak_lr,
            warmup_steps: t.warmup_steps,
            max_steps: t.max_steps,
            weight_decay: t.weight_decay,
            seed: t.seed,
            order_seed: t.order_seed,
            dropout: t.dropout,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            peak_lr: self.peak_lr,
            warmup_steps: self.warmup_steps,
            max_steps: self.max_steps,
            weight_decay: self.weight_decay,
            seed: self.seed,
            order_seed: self.order_seed,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub conv_kernel: usize,
    pub n_heads: usize,
    pub dropout: f64,
    /// Neighbours consulted by `knn` tasks.
    pub k: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let t = ProbeTrainConfig::default();
        let p = ProbeConfig::new(8, crate::downstream::HeadType::Regression);
        Self {
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            seed: t.seed,
            conv_kernel: p.conv_kernel,
            n_heads: p.n_heads,
            dropout: p.dropout,
            k: 1,
        }
    }
}

impl ProbeSection {
    pub fn train_config(&self) -> ProbeTrainConfig {
        ProbeTrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Real-valued label per protein, scored by Spearman rho.
    Regression,
    /// Two classes per protein.
    Binary,
    Multiclass,
    /// One class character per residue (Q3/Q8 style).
    PerResidue,
    /// Contacts derived from C-alpha traces, scored by L/5 precision.
    Contact,
    /// Nearest-neighbour label transfer on mean-pooled embeddings.
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub kind: TaskKind,
    pub train: PathBuf,
    pub test: PathBuf,
    /// `id<TAB>label` file covering both splits; unused by contact tasks.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Directory holding `{id}.pdb` (or `{id}.xyz`) traces for contact tasks.
    #[serde(default)]
    pub structures: Option<PathBuf>,
}

/// One run of the ablation protocol: pre-train, embed, probe, report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub id: String,
    pub corpus: PathBuf,
    pub model: ModelConfig,
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    /// Where `run_experiment` writes its report when no output directory is given.
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub generation: Option<GenerationSection>,
}

/// Family fine-tuning, generation and infilling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    /// Fine-tuning set; also the prompt source unless `prompts` is given.
    pub family: PathBuf,
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    /// Fine-tuning epochs; variants are generated after each one.
    #[serde(default = "default_gen_epochs")]
    pub epochs: usize,
    #[serde(default = "default_gen_batch")]
    pub batch_size: usize,
    #[serde(default = "default_gen_lr")]
    pub lr: f64,
    #[serde(default = "default_beams")]
    pub num_beams: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default = "default_prompt_length")]
    pub prompt_length: usize,
    #[serde(default = "default_mask_probability")]
    pub mask_probability: f64,
    #[serde(default = "default_gen_seed")]
    pub seed: u64,
}

fn default_temperatures() -> Vec<f64> {
    vec![1.0, 1.5, 2.0]
}
fn default_gen_epochs() -> usize {
    2
}
fn default_gen_batch() -> usize {
    8
}
fn default_gen_lr() -> f64 {
    1e-3
}
fn default_beams() -> usize {
    crate::generation::GenerationConfig::default().num_beams
}
fn default_max_length() -> usize {
    crate::generation::GenerationConfig::default().max_length
}
fn default_prompt_length() -> usize {
    crate::generation::GenerationConfig::default().prompt_length
}
fn default_mask_probability() -> f64 {
    crate::generation::GenerationConfig::default().mask_probability
}
fn default_gen_seed() -> u64 {
    crate::generation::GenerationConfig::default().seed
}

impl GenerationSection {
    pub fn generation_config(&self, temperature: f64) -> crate::generation::GenerationConfig {
        crate::generation::GenerationConfig {
            num_beams: self.num_beams,
            temperature,
            max_length: self.max_length,
            prompt_length: self.prompt_length,
            mask_probability: self.mask_probability,
            seed: self.seed,
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::SchemaVersion {
                found: cfg.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        rebase(base_dir, &mut cfg.corpus);
        if let Some(r) = &mut cfg.report {
            rebase(base_dir, r);
        }
        if let Some(g) = &mut cfg.generation {
            rebase(base_dir, &mut g.family);
            if let Some(p) = &mut g.prompts {
                rebase(base_dir, p);
            }
        }
        for t in &mut cfg.tasks {
            rebase(base_dir, &mut t.train);
            rebase(base_dir, &mut t.test);
            if let Some(l) = &mut t.labels {
                rebase(base_dir, l);
            }
            if let Some(s) = &mut t.structures {
                rebase(base_dir, s);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(HarnessError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Replaces every seed (initialization, corruption, batch order, probe
    /// and generation) with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.corruption.seed = seed;
        self.training.seed = seed;
        self.training.order_seed = seed;
        self.probe.seed = seed;
        if let Some(g) = &mut self.generation {
            g.seed = seed;
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section and that referenced files exist.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let config = |e: &dyn std::fmt::Display| HarnessError::Config(format!("{}: {e}", self.id));
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.id.is_empty() {
            return Err(HarnessError::Config("experiment id is empty".into()));
        }
        self.model.validate().map_err(|e| config(&e))?;
        self.corruption.spec()?;
        self.training.train_config().validate().map_err(|e| config(&e))?;
        let mut files = vec![&self.corpus];
        let mut names = std::collections::HashSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                return Err(config(&format!("duplicate task name {:?}", t.name)));
            }
            files.push(&t.train);
            files.push(&t.test);
            match (t.kind, &t.labels, &t.structures) {
                (TaskKind::Contact, _, Some(dir)) => {
                    if !dir.is_dir() {
                        return Err(HarnessError::MissingFile(dir.clone()));
                    }
                }
                (TaskKind::Contact, _, None) => {
                    return Err(config(&format!("task {:?} needs a structures directory", t.name)))
                }
                (_, Some(l), _) => files.push(l),
                (_, None, _) => return Err(config(&format!("task {:?} needs a labels file", t.name))),
            }
        }
        match files.into_iter().find(|f| !f.is_file()) {
            Some(f) => Err(HarnessError::MissingFile(f.clone())),
            None => Ok(()),
        }
    }
}

/// Desk-scale model standing in for the 36/36-layer reference: widths are
/// divided by 16 and depths by 6.
fn toy_baseline_model() -> ModelConfig {
    ModelConfig {
        d_model: 48,
        n_heads: 4,
        n_encoder_layers: 6,
        n_decoder_layers: 6,
        d_ff: 192,
        activation: Activation::GatedGelu,
        relpos_num_embeddings: 32,
        relpos_offset: 128,
        tie_decoder_embedding: false,
        max_length: 512,
        ..ModelConfig::toy()
    }
}

pub const PRESET_IDS: [&str; 24] = [
    "exp0", "exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "exp7", "exp8", "exp9", "exp10", "exp11", "exp12",
    "exp13", "exp14", "exp15", "exp16", "exp17", "exp18", "exp19", "exp20", "exp21", "exp22", "exp23",
];

/// Toy-scale preset for one ablation. Each preset changes one variable
/// relative to the experiment it descends from. `corpus` is a placeholder
/// path to be replaced before running.
pub fn preset(id: &str) -> Option<ExperimentConfig> {
    let corruption = |strategy: &str, probability: f64| CorruptionSection {
        strategy: strategy.into(),
        probability,
        seed: 0,
    };
    let base = |id: &str| ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        id: id.to_string(),
        corpus: PathBuf::from("corpus.fasta"),
        model: toy_baseline_model(),
        corruption: corruption("S0", 0.15),
        training: TrainingSection::default(),
        probe: ProbeSection::default(),
        tasks: Vec::new(),
        report: None,
        generation: None,
    };
    let with = |parent: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = preset(parent)?;
        c.id = id.to_string();
        f(&mut c);
        Some(c)
    };
    let layers = |enc: usize, dec: usize| move |c: &mut ExperimentConfig| {
        c.model.n_encoder_layers = enc;
        c.model.n_decoder_layers = dec;
    };
    let relpos = |buckets: usize, offset: usize| move |c: &mut ExperimentConfig| {
        c.model.relpos_num_embeddings = buckets;
        c.model.relpos_offset = offset;
    };
    match id {
        "exp0" => Some(base(id)),
        "exp1" => with("exp0", &|c| c.corruption = corruption("S1", 0.15)),
        "exp2" => with("exp0", &|c| c.corruption = corruption("S2", 0.15)),
        "exp3" => with("exp0", &|c| c.corruption = corruption("S3", 0.15)),
        "exp4" => with("exp0", &|c| c.corruption = corruption("S4", 0.15)),
        "exp5" => with("exp0", &|c| c.corruption = corruption("S5", 0.15)),
        "exp6" => with("exp0", &|c| c.corruption = corruption("S6_literal", 0.15)),
        "exp7" => with("exp4", &|c| c.corruption.probability = 0.10),
        "exp8" => with("exp4", &|c| c.corruption.probability = 0.20),
        "exp9" => with("exp4", &|c| c.corruption.probability = 0.30),
        "exp10" => with("exp8", &layers(9, 3)),
        "exp11" => with("exp8", &layers(8, 4)),
        "exp12" => with("exp8", &layers(4, 8)),
        "exp13" => with("exp11", &|c| {
            layers(4, 2)(c);
            c.model.d_model = 64;
            c.model.d_ff = 256;
        }),
        "exp14" => with("exp11", &|c| {
            layers(10, 2)(c);
            c.model.activation = Activation::Relu;
        }),
        "exp15" => with("exp11", &|c| c.model.activation = Activation::Relu),
        "exp16" => with("exp11", &relpos(32, 256)),
        "exp17" => with("exp11", &relpos(32, 64)),
        "exp18" => with("exp11", &relpos(64, 64)),
        "exp19" => with("exp11", &relpos(16, 64)),
        "exp20" => with("exp11", &relpos(64, 128)),
        "exp21" => with("exp11", &relpos(128, 256)),
        "exp22" => with("exp20", &|c| c.model.tie_decoder_embedding = true),
        "exp23" => with("exp20", &|c| {
            c.corpus = PathBuf::from("uniref90.fasta");
            c.training.epochs = 1;
        }),
        _ => None,
    }
}
