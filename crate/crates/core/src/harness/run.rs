use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use super::config::{ExperimentConfig, GenerationSection, TaskConfig, TaskKind};
use super::report::{emit_report, MetricReport, ReportFormat, TaskScore};
use super::HarnessError;
use crate::autograd::Tensor;
use crate::corpus::{parse_coords, parse_fasta, parse_labels, write_fasta, SequenceRecord};
use crate::downstream::{eat_accuracy, knn_transfer, train_probe, EatIndex, EatLabels, HeadType, ProbeConfig, Target};
use crate::generation::{finetune_family, generate_family, mlm_infill, uniqueness_report};
use crate::metrics::{contacts_from_coords, entropy_mse, internal_identity, shannon_profile, Scoring};
use crate::model::{extract_embeddings, load_checkpoint, save_checkpoint, ModelConfig, ParameterStore, Pooling, Precision};
use crate::training::{fit, Objective, TrainConfig, TrainingLog};

const CONTACT_THRESHOLD: f64 = 8.0;

fn stage<E: std::error::Error + Send + Sync + 'static>(name: &'static str) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::Stage {
        stage: name,
        source: Box::new(e),
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(io(path))
}

/// Reads a FASTA file, truncating records to what the model accepts.
pub fn load_records(path: &Path, max_len: usize) -> Result<Vec<SequenceRecord>, HarnessError> {
    Ok(parse_fasta(path)
        .map_err(stage("load"))?
        .into_iter()
        .map(|r| r.truncated(max_len))
        .collect())
}

/// Pre-trains a fresh model on the experiment corpus.
pub fn pretrain(cfg: &ExperimentConfig) -> Result<(ParameterStore, TrainingLog), HarnessError> {
    cfg.validate()?;
    let corpus = load_records(&cfg.corpus, cfg.model.max_length.saturating_sub(1))?;
    let mut params = ParameterStore::init(&cfg.model, Precision::Single).map_err(stage("pretrain"))?;
    let objective = Objective::Denoise(cfg.corruption.spec()?);
    let log = fit(
        &cfg.model,
        &mut params,
        &corpus,
        &objective,
        &[],
        &cfg.training.train_config(),
    )
    .map_err(stage("pretrain"))?;
    Ok((params, log))
}

struct Split {
    embeddings: Vec<Tensor>,
    targets: Vec<Target>,
}

fn load_task_split(
    path: &Path,
    task: &TaskConfig,
    labels: &HashMap<String, String>,
    model: &ModelConfig,
    params: &ParameterStore,
    pooling: Pooling,
) -> Result<(Vec<SequenceRecord>, Vec<Tensor>, Vec<String>), HarnessError> {
    let records = load_records(path, model.max_length)?;
    let mut raw = Vec::with_capacity(records.len());
    for r in &records {
        if task.kind == TaskKind::Contact {
            raw.push(String::new());
            continue;
        }
        let l = labels.get(&r.id).ok_or_else(|| {
            HarnessError::Config(format!("task {}: no label for {}", task.name, r.id))
        })?;
        if task.kind == TaskKind::PerResidue {
            if l.chars().count() < r.len() {
                return Err(HarnessError::Config(format!(
                    "task {}: label for {} is shorter than its sequence",
                    task.name, r.id
                )));
            }
            raw.push(l.chars().take(r.len()).collect());
        } else {
            raw.push(l.clone());
        }
    }
    let emb = extract_embeddings(&records, model, params, pooling)
        .map_err(stage("embed"))?
        .into_iter()
        .map(|e| e.values)
        .collect();
    Ok((records, emb, raw))
}

fn contact_map(task: &TaskConfig, rec: &SequenceRecord) -> Result<Vec<bool>, HarnessError> {
    let dir = task
        .structures
        .as_ref()
        .ok_or_else(|| HarnessError::Config(format!("task {} needs structures", task.name)))?;
    let path = ["pdb", "xyz"]
        .iter()
        .map(|ext| dir.join(format!("{}.{ext}", rec.id)))
        .find(|p| p.is_file())
        .ok_or_else(|| HarnessError::MissingFile(dir.join(format!("{}.pdb", rec.id))))?;
    let mut coords = parse_coords(&path).map_err(stage("load"))?;
    coords.truncate(rec.len());
    if coords.len() != rec.len() {
        return Err(HarnessError::Config(format!(
            "{}: {} C-alpha atoms for {} residues",
            path.display(),
            coords.len(),
            rec.len()
        )));
    }
    Ok(contacts_from_coords(&coords, CONTACT_THRESHOLD))
}

/// Trains and scores the probe (or k-NN transfer) for one task.
pub fn evaluate_task(
    task: &TaskConfig,
    exp: &ExperimentConfig,
    model: &ModelConfig,
    params: &ParameterStore,
) -> Result<TaskScore, HarnessError> {
    let labels: HashMap<String, String> = match &task.labels {
        Some(p) => parse_labels(p).map_err(stage("load"))?.into_iter().collect(),
        None => HashMap::new(),
    };
    let pooling = if task.kind == TaskKind::Knn { Pooling::Mean } else { Pooling::None };
    let (train_recs, train_emb, train_raw) = load_task_split(&task.train, task, &labels, model, params, pooling)?;
    let (test_recs, test_emb, test_raw) = load_task_split(&task.test, task, &labels, model, params, pooling)?;

    if task.kind == TaskKind::Knn {
        let levels = |l: &str| -> Result<EatLabels, HarnessError> {
            let parts: Vec<&str> = l.split('.').collect();
            match parts.len() {
                1 => Ok(std::array::from_fn(|_| l.to_string())),
                4 => Ok(std::array::from_fn(|i| parts[..=i].join("."))),
                _ => Err(HarnessError::Config(format!("label {l:?} has neither 1 nor 4 levels"))),
            }
        };
        let to_vecs = |e: &[Tensor]| e.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>();
        let index = EatIndex::new(
            to_vecs(&train_emb),
            train_raw.iter().map(|l| levels(l)).collect::<Result<_, _>>()?,
        )
        .map_err(stage("probe"))?;
        let truth: Vec<EatLabels> = test_raw.iter().map(|l| levels(l)).collect::<Result<_, _>>()?;
        let predicted = knn_transfer(&to_vecs(&test_emb), &index, exp.probe.k).map_err(stage("probe"))?;
        let acc = eat_accuracy(&predicted, &truth).map_err(stage("probe"))?;
        return Ok(TaskScore {
            task: task.name.clone(),
            metric: "eat_mean".into(),
            value: 100.0 * acc.mean,
            percent: true,
        });
    }

    let classes: Vec<String> = match task.kind {
        TaskKind::Binary | TaskKind::Multiclass => {
            let set: BTreeSet<&String> = train_raw.iter().chain(&test_raw).collect();
            set.into_iter().cloned().collect()
        }
        TaskKind::PerResidue => {
            let set: BTreeSet<char> = train_raw.iter().chain(&test_raw).flat_map(|l| l.chars()).collect();
            set.into_iter().map(String::from).collect()
        }
        _ => Vec::new(),
    };
    let head = match task.kind {
        TaskKind::Regression => HeadType::Regression,
        TaskKind::Binary if classes.len() == 2 => HeadType::Binary,
        TaskKind::Binary => {
            return Err(HarnessError::Config(format!(
                "binary task {} has {} classes",
                task.name,
                classes.len()
            )))
        }
        TaskKind::Multiclass => HeadType::Multiclass(classes.len().max(2)),
        TaskKind::PerResidue => HeadType::PerResidueMulticlass(classes.len().max(2)),
        TaskKind::Contact => HeadType::ResiduePairBinary,
        TaskKind::Knn => unreachable!("handled above"),
    };
    let class_of = |c: &str| classes.iter().position(|k| k == c).expect("class collected");
    let build = |recs: &[SequenceRecord], emb: Vec<Tensor>, raw: &[String]| -> Result<Split, HarnessError> {
        let targets = recs
            .iter()
            .zip(raw)
            .map(|(r, l)| {
                Ok(match task.kind {
                    TaskKind::Regression => Target::Real(l.parse().map_err(|_| {
                        HarnessError::Config(format!("task {}: {l:?} is not a number", task.name))
                    })?),
                    TaskKind::Binary | TaskKind::Multiclass => Target::Class(class_of(l)),
                    TaskKind::PerResidue => {
                        Target::Residues(l.chars().map(|c| Some(class_of(&c.to_string()))).collect())
                    }
                    TaskKind::Contact => Target::Contacts(contact_map(task, r)?),
                    TaskKind::Knn => unreachable!("handled above"),
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        Ok(Split {
            embeddings: emb,
            targets,
        })
    };
    let train = build(&train_recs, train_emb, &train_raw)?;
    let test = build(&test_recs, test_emb, &test_raw)?;

    let probe_cfg = ProbeConfig {
        conv_kernel: exp.probe.conv_kernel,
        n_heads: exp.probe.n_heads,
        dropout: exp.probe.dropout,
        seed: exp.probe.seed,
        ..ProbeConfig::new(model.d_model, head)
    };
    let pairs = |s: Split| s.embeddings.into_iter().zip(s.targets).collect::<Vec<_>>();
    let result = train_probe(&pairs(train), &pairs(test), &probe_cfg, &exp.probe.train_config())
        .map_err(stage("probe"))?;
    let percent = head != HeadType::Regression;
    Ok(TaskScore {
        task: task.name.clone(),
        metric: result.metric_name.to_string(),
        value: if percent { 100.0 * result.metric } else { result.metric },
        percent,
    })
}

pub fn evaluate_tasks(
    exp: &ExperimentConfig,
    model: &ModelConfig,
    params: &ParameterStore,
) -> Result<Vec<TaskScore>, HarnessError> {
    exp.tasks.iter().map(|t| evaluate_task(t, exp, model, params)).collect()
}

/// Pre-train, embed, probe and report. With `out_dir`, the checkpoint,
/// training log and one-row report land there; otherwise the report goes
/// to the configured report path, if any.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<MetricReport, HarnessError> {
    let (params, log) = pretrain(cfg)?;
    let scores = evaluate_tasks(cfg, &cfg.model, &params)?;
    let report = MetricReport {
        experiment: cfg.id.clone(),
        scores,
        final_loss: log.epoch_losses.last().copied(),
        steps: log.entries.len(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        save_checkpoint(dir.join("model.ckpt"), &cfg.model, &params).map_err(stage("checkpoint"))?;
        write(&dir.join("train.tsv"), log.to_tsv())?;
        write(&dir.join("config.toml"), cfg.to_toml())?;
        emit_report(std::slice::from_ref(&report), ReportFormat::Tsv, dir.join("report.tsv"))?;
    } else if let Some(path) = &cfg.report {
        emit_report(std::slice::from_ref(&report), ReportFormat::Tsv, path)?;
    }
    Ok(report)
}

/// Runs experiments in order, each in `out_dir/<id>`, and writes the
/// combined table to `out_dir/matrix.<tsv|txt>`.
pub fn run_matrix(
    configs: &[ExperimentConfig],
    out_dir: &Path,
    format: ReportFormat,
) -> Result<Vec<MetricReport>, HarnessError> {
    let mut ids = HashSet::new();
    for c in configs {
        if !ids.insert(c.id.as_str()) {
            return Err(HarnessError::DuplicateId(c.id.clone()));
        }
    }
    let mut reports = Vec::with_capacity(configs.len());
    for c in configs {
        log::info!("running {}", c.id);
        reports.push(run_experiment(c, Some(&out_dir.join(&c.id)))?);
    }
    emit_report(&reports, format, out_dir.join(format!("matrix.{}", format.extension())))?;
    Ok(reports)
}

/// Saves and reloads a model, returning the reloaded parameters.
pub fn checkpoint_roundtrip(
    config: &ModelConfig,
    params: &ParameterStore,
    path: impl AsRef<Path>,
) -> Result<ParameterStore, HarnessError> {
    let path = path.as_ref();
    save_checkpoint(path, config, params).map_err(stage("checkpoint"))?;
    let (loaded_cfg, loaded) = load_checkpoint(path).map_err(stage("checkpoint"))?;
    if &loaded_cfg != config {
        return Err(HarnessError::Config("checkpoint config differs after reload".into()));
    }
    Ok(loaded)
}

/// Fine-tunes the decoder on the family one epoch at a time and, after each
/// epoch, writes `family_e{epoch}_t{temperature}.fasta` for every
/// temperature. Returns all generated records.
pub fn run_family_generation(
    gen: &GenerationSection,
    model: &ModelConfig,
    params: &mut ParameterStore,
    out_dir: &Path,
) -> Result<Vec<SequenceRecord>, HarnessError> {
    let family = load_records(&gen.family, model.max_length.saturating_sub(1))?;
    let prompts = match &gen.prompts {
        Some(p) => load_records(p, model.max_length)?,
        None => family.clone(),
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut all = Vec::new();
    let mut log_tsv = String::new();
    for epoch in 1..=gen.epochs {
        let train = TrainConfig {
            epochs: 1,
            batch_size: gen.batch_size,
            peak_lr: gen.lr,
            seed: gen.seed ^ epoch as u64,
            order_seed: gen.seed.wrapping_add(epoch as u64),
            ..TrainConfig::default()
        };
        let log = finetune_family(model, params, &family, &gen.generation_config(1.0), &train)
            .map_err(stage("finetune"))?;
        log_tsv.push_str(&format!("# epoch {epoch}\n{}", log.to_tsv()));
        for &t in &gen.temperatures {
            let out = generate_family(model, params, &prompts, &gen.generation_config(t), epoch)
                .map_err(stage("generate"))?;
            let path = out_dir.join(format!("family_e{epoch}_t{t}.fasta"));
            write_fasta(&path, &out).map_err(stage("generate"))?;
            all.extend(out);
        }
    }
    write(&out_dir.join("finetune.tsv"), log_tsv)?;
    Ok(all)
}

/// One-shot infilling of every record at every configured temperature.
pub fn run_infill(
    gen: &GenerationSection,
    model: &ModelConfig,
    params: &ParameterStore,
    records: &[SequenceRecord],
) -> Result<Vec<SequenceRecord>, HarnessError> {
    let mut out = Vec::new();
    for &t in &gen.temperatures {
        for r in records {
            out.extend(mlm_infill(model, params, r, &gen.generation_config(t)).map_err(stage("infill"))?);
        }
    }
    Ok(out)
}

/// Summary statistics comparing a generated set with its reference family.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEvaluation {
    pub generated: usize,
    pub unique_fraction: f64,
    pub generated_identity: Option<f64>,
    pub reference_identity: Option<f64>,
    /// Only when every sequence in both sets has the same length, so the
    /// sets can be read as alignments.
    pub entropy_mse: Option<f64>,
}

impl SetEvaluation {
    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v}"));
        format!(
            "metric\tvalue\ngenerated\t{}\nunique_fraction\t{}\ngenerated_identity\t{}\nreference_identity\t{}\nentropy_mse\t{}\n",
            self.generated,
            self.unique_fraction,
            opt(self.generated_identity),
            opt(self.reference_identity),
            opt(self.entropy_mse)
        )
    }
}

pub fn evaluate_sets(
    generated: &[SequenceRecord],
    reference: &[SequenceRecord],
    sample_size: usize,
    seed: u64,
) -> Result<SetEvaluation, HarnessError> {
    let seqs = |r: &[SequenceRecord]| r.iter().map(|x| x.sequence.clone()).collect::<Vec<_>>();
    let (g, r) = (seqs(generated), seqs(reference));
    let scoring = Scoring::default();
    let identity = |s: &[String]| -> Result<Option<f64>, HarnessError> {
        if s.len() < 2 {
            return Ok(None);
        }
        Ok(Some(internal_identity(s, sample_size, seed, &scoring).map_err(stage("evaluate"))?.mean))
    };
    let lengths: HashSet<usize> = g.iter().chain(&r).map(String::len).collect();
    let entropy = if lengths.len() == 1 && !g.is_empty() && !r.is_empty() {
        let a = shannon_profile(&g, false).map_err(stage("evaluate"))?;
        let b = shannon_profile(&r, false).map_err(stage("evaluate"))?;
        Some(entropy_mse(&a, &b).map_err(stage("evaluate"))?)
    } else {
        None
    };
    Ok(SetEvaluation {
        generated: g.len(),
        unique_fraction: uniqueness_report(generated, reference).unique_fraction,
        generated_identity: identity(&g)?,
        reference_identity: identity(&r)?,
        entropy_mse: entropy,
    })
}
