use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spanforge::corpus::{parse_fasta, write_fasta};
use spanforge::harness::{
    emit_report, evaluate_sets, evaluate_tasks, load_records, preset, pretrain, run_family_generation, run_infill,
    run_matrix, ExperimentConfig, HarnessError, MetricReport, ReportFormat, PRESET_IDS,
};
use spanforge::model::{load_checkpoint, save_checkpoint};

#[derive(Parser)]
#[command(name = "spanforge", version, about = "Span-corruption protein language model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "tsv", value_parser = ["tsv", "table"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train a model with the configured corruption objective.
    Pretrain(Common),
    /// Train and score the configured downstream probes.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Model to probe; defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Fine-tune the decoder on a family and generate variants.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// One-shot masked infilling of every record in a FASTA file.
    Infill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare a generated set with a reference family.
    Evaluate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Pairs sampled for internal identity.
        #[arg(long, default_value_t = 2000)]
        sample: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several experiments and tabulate them.
    Matrix {
        /// Experiment configs; may be repeated.
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Built-in presets, e.g. `exp0-exp9` or `exp4,exp8`.
        #[arg(long)]
        presets: Option<String>,
        /// Pre-training corpus for presets.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "tsv", value_parser = ["tsv", "table"])]
        format: String,
    },
}

/// An error tagged with the pipeline stage that raised it.
struct StageError {
    stage: &'static str,
    error: anyhow::Error,
}

impl From<HarnessError> for StageError {
    fn from(e: HarnessError) -> Self {
        Self {
            stage: e.stage(),
            error: e.into(),
        }
    }
}

fn tagged(stage: &'static str) -> impl FnOnce(anyhow::Error) -> StageError {
    move |error| StageError { stage, error }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, StageError> {
    let cfg = ExperimentConfig::load(&common.config)?;
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn format_of(s: &str) -> ReportFormat {
    s.parse().unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<(), StageError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(tagged("io"))
}

fn model_for(
    cfg: &ExperimentConfig,
    out: &Path,
    checkpoint: Option<&PathBuf>,
) -> Result<(spanforge::model::ModelConfig, spanforge::model::ParameterStore), StageError> {
    let path = checkpoint.cloned().unwrap_or_else(|| out.join("model.ckpt"));
    let (model, params) = load_checkpoint(&path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(tagged("checkpoint"))?;
    if model != cfg.model {
        log::warn!("checkpoint model differs from the config's; using the checkpoint");
    }
    Ok((model, params))
}

/// Expands `exp0-exp9,exp12` into preset ids.
fn expand_presets(spec: &str) -> Result<Vec<String>> {
    let num = |s: &str| -> Result<usize> {
        s.strip_prefix("exp")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| anyhow!("bad preset name {s:?}"))
    };
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => out.extend((num(a)?..=num(b)?).map(|i| format!("exp{i}"))),
            None => out.push(part.to_string()),
        }
    }
    if let Some(bad) = out.iter().find(|id| !PRESET_IDS.contains(&id.as_str())) {
        bail!("unknown preset {bad:?}; known presets are exp0 to exp23");
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Pretrain(common) => {
            let cfg = load_config(&common)?;
            create_dir(&common.out)?;
            let (params, log) = pretrain(&cfg)?;
            save_checkpoint(common.out.join("model.ckpt"), &cfg.model, &params)
                .map_err(|e| tagged("checkpoint")(e.into()))?;
            log.write_tsv(common.out.join("train.tsv"))
                .map_err(|e| tagged("pretrain")(e.into()))?;
            println!(
                "{}: {} steps, final epoch loss {:.4}",
                cfg.id,
                log.entries.len(),
                log.epoch_losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Probe { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let (model, params) = model_for(&cfg, &common.out, checkpoint.as_ref())?;
            let report = MetricReport {
                experiment: cfg.id.clone(),
                scores: evaluate_tasks(&cfg, &model, &params)?,
                final_loss: None,
                steps: 0,
            };
            let format = format_of(&common.format);
            let path = common.out.join(format!("report.{}", format.extension()));
            emit_report(std::slice::from_ref(&report), format, &path)?;
            print!("{}", std::fs::read_to_string(&path).unwrap_or_default());
        }
        Command::Generate { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let gen = cfg
                .generation
                .clone()
                .ok_or_else(|| tagged("config")(anyhow!("config has no [generation] section")))?;
            let (model, mut params) = model_for(&cfg, &common.out, checkpoint.as_ref())?;
            let out = run_family_generation(&gen, &model, &mut params, &common.out)?;
            println!("generated {} sequences into {}", out.len(), common.out.display());
        }
        Command::Infill {
            common,
            checkpoint,
            input,
        } => {
            let cfg = load_config(&common)?;
            let gen = cfg
                .generation
                .clone()
                .ok_or_else(|| tagged("config")(anyhow!("config has no [generation] section")))?;
            let (model, params) = model_for(&cfg, &common.out, checkpoint.as_ref())?;
            let records = load_records(&input, model.max_length.saturating_sub(1))?;
            let out = run_infill(&gen, &model, &params, &records)?;
            create_dir(&common.out)?;
            let path = common.out.join("infill.fasta");
            write_fasta(&path, &out).map_err(|e| tagged("infill")(e.into()))?;
            println!("wrote {} variants to {}", out.len(), path.display());
        }
        Command::Evaluate {
            generated,
            reference,
            sample,
            seed,
            out,
        } => {
            let read = |p: &Path| parse_fasta(p).map_err(|e| tagged("load")(e.into()));
            let eval = evaluate_sets(&read(&generated)?, &read(&reference)?, sample, seed)?;
            create_dir(&out)?;
            let path = out.join("evaluation.tsv");
            std::fs::write(&path, eval.to_tsv())
                .with_context(|| format!("writing {}", path.display()))
                .map_err(tagged("io"))?;
            print!("{}", eval.to_tsv());
        }
        Command::Matrix {
            config,
            presets,
            corpus,
            seed,
            out,
            format,
        } => {
            let mut configs = config
                .iter()
                .map(ExperimentConfig::load)
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(spec) = presets {
                let corpus = corpus.ok_or_else(|| tagged("config")(anyhow!("--presets needs --corpus")))?;
                for id in expand_presets(&spec).map_err(tagged("config"))? {
                    let mut p = preset(&id).expect("validated preset id");
                    p.corpus = corpus.clone();
                    configs.push(p);
                }
            }
            if configs.is_empty() {
                return Err(tagged("config")(anyhow!("no experiments given")));
            }
            if let Some(s) = seed {
                configs = configs.into_iter().map(|c| c.with_seed(s)).collect();
            }
            create_dir(&out)?;
            let format = format_of(&format);
            run_matrix(&configs, &out, format)?;
            let path = out.join(format!("matrix.{}", format.extension()));
            print!("{}", std::fs::read_to_string(&path).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {:#}", e.stage, e.error);
            ExitCode::FAILURE
        }
    }
}
