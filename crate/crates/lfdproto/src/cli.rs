//! Command-line surface: episode batches, training, bound verification,
//! and the covariance-ratio sweep.
//!
//! Configuration comes from an optional TOML file plus flag overrides
//! (flags win). Every output embeds the fully resolved configuration and
//! the root seed, and all randomness is derived from that one seed via
//! named substreams, so re-running a recorded config reproduces outputs
//! bitwise.

use crate::datagen::{
    cov_ratio_sweep, sample_episode_rng, sample_task_stream, write_sweep_csv, FeatureDataset,
    SweepConfig, SyntheticSpec,
};
use crate::episode::{run_episode, AffinityConfig, ExtractorConfig, LossVariant, Task};
use crate::theory::{verify_bound, BoundReport};
use crate::trainer::{train, Checkpoint, Embedder, EmbedderKind, TrainConfig};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Substream block reserved for validation episodes during training.
const VALIDATION_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Parser)]
#[command(
    name = "lfdproto",
    version,
    about = "Few-shot prototype classification with per-episode discriminant projections"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of episodes and write per-episode JSONL results.
    Episode(CommonArgs),
    /// Train an embedder with the episodic loss.
    Train(CommonArgs),
    /// Check the expected-risk bound against Monte Carlo risk.
    BoundVerify(CommonArgs),
    /// Mixup covariance-ratio sweep (CSV output).
    CovRatio(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed for all randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = rayon default).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorName>,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorName {
    Identity,
    Fda,
    LfdaShared,
    LfdaPerclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    Paper,
    Softmax,
}

impl LossName {
    fn variant(self) -> LossVariant {
        match self {
            LossName::Paper => LossVariant::Paper,
            LossName::Softmax => LossVariant::StandardSoftmax,
        }
    }
}

/// The TOML file schema; every field is optional and flag-overridable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub extractor: Option<ExtractorName>,
    pub loss: Option<LossName>,
    /// Projection dimension override (extractor default otherwise).
    pub dim: Option<usize>,
    pub bandwidth: Option<f64>,
    pub local_scaling: Option<bool>,
    /// Synthetic data source.
    pub synthetic: Option<SyntheticSpec>,
    /// Stored dataset source (`label,f0,…` CSV).
    pub dataset: Option<PathBuf>,
    pub episode: Option<EpisodeSection>,
    pub train: Option<TrainSection>,
    pub bound: Option<BoundSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub count: usize,
    /// Episode shape when drawing from a stored dataset (a synthetic
    /// spec fixes its own shape).
    pub classes: usize,
    pub shots: usize,
    pub queries: usize,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        EpisodeSection {
            count: 100,
            classes: 5,
            shots: 5,
            queries: 15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iterations: usize,
    pub tasks_per_update: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub validate_every: usize,
    pub validation_episodes: usize,
    /// Embedder architecture; defaults to a linear map at identity.
    pub embedder: Option<EmbedderKind>,
    /// Continue from a saved checkpoint.
    pub resume: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            iterations: 100,
            tasks_per_update: 4,
            step_size: 1e-2,
            momentum: 0.0,
            validate_every: 0,
            validation_episodes: 20,
            embedder: None,
            resume: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub trials: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection { trials: 2000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub episodes: usize,
    pub lambda_grid: Vec<f64>,
    pub classes: usize,
    pub shots: usize,
    pub queries: usize,
    /// Records per class when synthesizing the sweep dataset.
    pub per_class: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            episodes: 50,
            lambda_grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            classes: 2,
            shots: 10,
            queries: 5,
            per_class: 100,
        }
    }
}

/// Where episodes come from.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Dataset(PathBuf),
}

/// The fully resolved run configuration, embedded in every output.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub extractor: ExtractorConfig,
    pub loss: LossVariant,
    pub data: DataSource,
    pub episode: EpisodeSection,
    pub train: TrainSection,
    pub bound: BoundSection,
    pub sweep: SweepSection,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Merges file and flags; `default_extractor` lets shared-projection
/// commands default away from the per-class extractor.
fn resolve(
    command: &str,
    args: &CommonArgs,
    default_extractor: ExtractorName,
) -> Result<Resolved> {
    let file = load_file_config(args.config.as_deref())?;
    let name = args.extractor.or(file.extractor).unwrap_or(default_extractor);
    let affinity = AffinityConfig {
        bandwidth: file.bandwidth.unwrap_or(1.0),
        local_scaling: file.local_scaling.unwrap_or(false),
    };
    let extractor = match name {
        ExtractorName::Identity => ExtractorConfig::Identity,
        ExtractorName::Fda => ExtractorConfig::Fda { dim: file.dim },
        ExtractorName::LfdaShared => ExtractorConfig::LfdaShared {
            dim: file.dim,
            affinity,
        },
        ExtractorName::LfdaPerclass => ExtractorConfig::LfdaPerClass {
            dim: file.dim,
            affinity,
        },
    };
    let data = match (&file.synthetic, &file.dataset) {
        (Some(spec), None) => {
            spec.validate()?;
            DataSource::Synthetic(spec.clone())
        }
        (None, Some(path)) => DataSource::Dataset(path.clone()),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "config sets both `synthetic` and `dataset`; exactly one data source is required"
                    .into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "config needs a data source: a `[synthetic]` spec or a `dataset` CSV path".into(),
            ))
        }
    };
    Ok(Resolved {
        command: command.to_string(),
        seed: args.seed.or(file.seed).unwrap_or(0),
        workers: args.workers.or(file.workers).unwrap_or(0),
        out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        extractor,
        loss: args.loss.or(file.loss).unwrap_or(LossName::Paper).variant(),
        data,
        episode: file.episode.unwrap_or_default(),
        train: file.train.unwrap_or_default(),
        bound: file.bound.unwrap_or_default(),
        sweep: file.sweep.unwrap_or_default(),
    })
}

fn with_workers<T: Send>(workers: usize, body: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return body();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(body)
}

/// Runs a parsed command; errors map to a nonzero exit in `main`.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Episode(args) => {
            let cfg = resolve("episode", &args, ExtractorName::LfdaPerclass)?;
            with_workers(cfg.workers, || cmd_episode(&cfg))
        }
        Command::Train(args) => {
            let cfg = resolve("train", &args, ExtractorName::LfdaPerclass)?;
            with_workers(cfg.workers, || cmd_train(&cfg))
        }
        Command::BoundVerify(args) => {
            let cfg = resolve("bound-verify", &args, ExtractorName::LfdaShared)?;
            with_workers(cfg.workers, || cmd_bound_verify(&cfg))
        }
        Command::CovRatio(args) => {
            let cfg = resolve("cov-ratio", &args, ExtractorName::LfdaShared)?;
            with_workers(cfg.workers, || cmd_cov_ratio(&cfg))
        }
    }
}

fn episode_task(cfg: &Resolved, ds: Option<&FeatureDataset>, stream: u64) -> Result<Task<f64>> {
    match (&cfg.data, ds) {
        (DataSource::Synthetic(spec), _) => sample_task_stream(spec, cfg.seed, stream),
        (DataSource::Dataset(_), Some(ds)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            Ok(sample_episode_rng(
                ds,
                cfg.episode.classes,
                cfg.episode.shots,
                cfg.episode.queries,
                &mut rng,
            )?
            .task)
        }
        (DataSource::Dataset(_), None) => unreachable!("dataset loaded by caller"),
    }
}

fn load_dataset(cfg: &Resolved) -> Result<Option<FeatureDataset>> {
    match &cfg.data {
        DataSource::Dataset(path) => Ok(Some(FeatureDataset::read_csv(path)?)),
        DataSource::Synthetic(_) => Ok(None),
    }
}

#[derive(Debug, Serialize)]
struct EpisodeRecord {
    episode_id: usize,
    extractor: String,
    k: usize,
    #[serde(rename = "C")]
    classes: usize,
    #[serde(rename = "M")]
    queries: usize,
    accuracy: f64,
    mean_loss: f64,
    seed: u64,
}

fn cmd_episode(cfg: &Resolved) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let records: Vec<EpisodeRecord> = (0..cfg.episode.count)
        .into_par_iter()
        .map(|e| -> Result<EpisodeRecord> {
            let task = episode_task(cfg, ds.as_ref(), e as u64)?;
            let result = run_episode(&task, &cfg.extractor, cfg.loss)?;
            Ok(EpisodeRecord {
                episode_id: e,
                extractor: cfg.extractor.name().to_string(),
                k: task.shots(),
                classes: task.class_count(),
                queries: task.queries_per_class(),
                accuracy: result.accuracy,
                mean_loss: result.mean_loss,
                seed: cfg.seed,
            })
        })
        .collect::<Result<_>>()?;

    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let var = records
        .iter()
        .map(|r| (r.accuracy - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let ci95 = 1.96 * (var / n).sqrt();
    let mean_loss = records.iter().map(|r| r.mean_loss).sum::<f64>() / n;

    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("episodes.jsonl");
    let mut file = std::fs::File::create(&path)?;
    for r in &records {
        writeln!(file, "{}", serde_json::to_string(r)?)?;
    }
    writeln!(
        file,
        "{}",
        serde_json::to_string(&serde_json::json!({
            "summary": {
                "episodes": records.len(),
                "mean_accuracy": mean,
                "ci95": ci95,
                "mean_loss": mean_loss,
            },
            "config": cfg,
        }))?
    )?;
    println!(
        "episodes: {} | accuracy {:.4} ± {:.4} (95% CI) | loss {:.4} -> {}",
        records.len(),
        mean,
        ci95,
        mean_loss,
        path.display()
    );
    Ok(())
}

fn cmd_bound_verify(cfg: &Resolved) -> Result<()> {
    let spec = match &cfg.data {
        DataSource::Synthetic(spec) => spec,
        DataSource::Dataset(_) => {
            return Err(Error::Config(
                "bound-verify needs a `[synthetic]` Gaussian model, not a stored dataset".into(),
            ))
        }
    };
    let model = spec.to_model()?;
    let report: BoundReport = verify_bound(&model, &cfg.extractor, cfg.bound.trials, cfg.seed)?;

    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("bound_report.json");
    let payload = serde_json::json!({ "report": report, "config": cfg });
    std::fs::write(&path, serde_json::to_string_pretty(&payload)?)?;
    println!(
        "bound rhs {:.4} | mc risk {:.4} ± {:.4} | trace ratio {:.4} (identity {:.4}) | {} -> {}",
        report.bound_rhs,
        report.mc_risk,
        report.mc_stderr,
        report.trace_ratio,
        report.trace_ratio_identity,
        if report.violated { "VIOLATED" } else { "holds" },
        path.display()
    );
    Ok(())
}

fn cmd_cov_ratio(cfg: &Resolved) -> Result<()> {
    let ds = match &cfg.data {
        DataSource::Dataset(path) => FeatureDataset::read_csv(path)?,
        DataSource::Synthetic(spec) => {
            FeatureDataset::synthesize(spec, cfg.sweep.per_class, cfg.seed)?
        }
    };
    if matches!(cfg.extractor, ExtractorConfig::LfdaPerClass { .. }) {
        return Err(Error::Config(
            "cov-ratio compares shared projections; pick identity, fda, or lfda-shared".into(),
        ));
    }
    let sweep_cfg = SweepConfig {
        classes: cfg.sweep.classes,
        shots: cfg.sweep.shots,
        queries: cfg.sweep.queries,
        episodes: cfg.sweep.episodes,
        lambda_grid: cfg.sweep.lambda_grid.clone(),
        extractors: vec![ExtractorConfig::Identity, cfg.extractor.clone()],
    };
    let rows = cov_ratio_sweep(&ds, &sweep_cfg, cfg.seed)?;

    std::fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("sweep.csv");
    write_sweep_csv(&rows, &csv_path)?;
    // The CSV keeps the spec'd plain schema; the resolved config rides in
    // a JSON sidecar next to it.
    let meta_path = cfg.out.join("sweep.meta.json");
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&serde_json::json!({ "config": cfg }))?,
    )?;
    println!("{} sweep rows -> {}", rows.len(), csv_path.display());
    Ok(())
}

fn cmd_train(cfg: &Resolved) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let dim = match (&cfg.data, &ds) {
        (DataSource::Synthetic(spec), _) => spec.dim,
        (_, Some(ds)) => ds.dim(),
        _ => unreachable!(),
    };
    let (embedder, start_iteration) = match &cfg.train.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            (ckpt.embedder()?, ckpt.iteration)
        }
        None => {
            let e = match cfg.train.embedder {
                None => Embedder::linear_identity(dim),
                Some(kind @ EmbedderKind::Identity { .. })
                | Some(kind @ EmbedderKind::Linear { .. })
                | Some(kind @ EmbedderKind::OneHiddenLayer { .. }) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(VALIDATION_STREAM_BASE - 1);
                    Embedder::random(kind, &mut rng)
                }
            };
            (e, 0)
        }
    };

    let train_cfg = TrainConfig {
        iterations: cfg.train.iterations,
        tasks_per_update: cfg.train.tasks_per_update,
        step_size: cfg.train.step_size,
        momentum: cfg.train.momentum,
        seed: cfg.seed,
        extractor: cfg.extractor.clone(),
        loss: cfg.loss,
        validate_every: cfg.train.validate_every,
    };
    let validation: Vec<Task<f64>> = (0..cfg.train.validation_episodes)
        .map(|j| episode_task(cfg, ds.as_ref(), VALIDATION_STREAM_BASE + j as u64))
        .collect::<Result<_>>()?;
    let batch = |i: usize| -> Result<Vec<Task<f64>>> {
        // Streams keyed by absolute iteration so resumed runs continue
        // the same task sequence.
        (0..cfg.train.tasks_per_update)
            .map(|b| {
                let stream = ((start_iteration + i) * cfg.train.tasks_per_update + b) as u64 + 1;
                episode_task(cfg, ds.as_ref(), stream)
            })
            .collect()
    };
    let val_ref = if validation.is_empty() {
        None
    } else {
        Some(validation.as_slice())
    };
    let outcome = train(embedder, batch, val_ref, &train_cfg)?;

    std::fs::create_dir_all(&cfg.out)?;
    let ckpt = Checkpoint::of(
        &outcome.embedder,
        cfg.seed,
        start_iteration + cfg.train.iterations,
    );
    let ckpt_path = cfg.out.join("checkpoint.json");
    ckpt.save(&ckpt_path)?;
    let trace_path = cfg.out.join("loss_trace.csv");
    let mut trace = String::from("iteration,loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{},{}\n", start_iteration + i, l));
    }
    std::fs::write(&trace_path, trace)?;
    std::fs::write(
        cfg.out.join("train.meta.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config": cfg,
            "start_iteration": start_iteration,
            "final_loss": outcome.loss_trace.last(),
            "validation": outcome.validation,
        }))?,
    )?;
    println!(
        "trained {} iterations | final loss {:.4} -> {}",
        cfg.train.iterations,
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        ckpt_path.display()
    );
    Ok(())
}
