//! Synthetic Gaussian (and Gaussian-mixture) task generation, episode
//! sampling from stored feature datasets, and the mixup covariance-ratio
//! sweep.
//!
//! Everything here is deterministic given `(spec, seed)`.

use crate::episode::{ExtractorConfig, Task};
use crate::linalg::{psd_factor, trace_of_solve, Matrix};
use crate::projection::Projections;
use crate::scatter::{projected_covariances, LabeledSet};
use crate::theory::{ClassMeanDistribution, GaussianTaskModel};
use crate::{Error, Result};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One mixture component of a multimodal class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    pub mean: Vec<f64>,
    pub weight: f64,
}

/// The component list for one class; weights must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMixture {
    pub components: Vec<MixComponent>,
}

/// Generative description of a synthetic episode distribution.
///
/// Without `multimodal`, class means are drawn from
/// `N(mean, sigma_pop)` and points from `N(mu_c, sigma_within)`. With
/// `multimodal` (one mixture per class), class means are fixed at the
/// component means and each point first draws a component — the geometry
/// in which local scatter matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    pub shots: usize,
    pub queries: usize,
    #[serde(default)]
    pub mean: Vec<f64>,
    pub sigma_pop: Vec<Vec<f64>>,
    pub sigma_within: Vec<Vec<f64>>,
    #[serde(default)]
    pub multimodal: Option<Vec<ClassMixture>>,
    /// Default seed recorded alongside outputs; operations take explicit
    /// seeds that override this.
    #[serde(default)]
    pub seed: u64,
}

fn diag_rows(d: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect())
        .collect()
}

impl SyntheticSpec {
    /// A unimodal spec with diagonal covariances and zero mean.
    pub fn gaussian_diag(
        classes: usize,
        shots: usize,
        queries: usize,
        pop_diag: &[f64],
        within_diag: &[f64],
    ) -> Self {
        SyntheticSpec {
            dim: pop_diag.len(),
            classes,
            shots,
            queries,
            mean: vec![0.0; pop_diag.len()],
            sigma_pop: diag_rows(pop_diag),
            sigma_within: diag_rows(within_diag),
            multimodal: None,
            seed: 0,
        }
    }

    fn matrix(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<Matrix<f64>> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidSpec(format!("{what} must be {dim}x{dim}")));
        }
        Ok(Matrix::from_rows(rows))
    }

    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    fn compile(&self) -> Result<CompiledSpec> {
        if self.dim == 0 || self.classes < 2 || self.shots == 0 || self.queries == 0 {
            return Err(Error::InvalidSpec(format!(
                "need dim >= 1, classes >= 2, shots >= 1, queries >= 1 (got {}, {}, {}, {})",
                self.dim, self.classes, self.shots, self.queries
            )));
        }
        if self.mean.len() != self.dim {
            return Err(Error::InvalidSpec(format!(
                "mean has dimension {}, spec says {}",
                self.mean.len(),
                self.dim
            )));
        }
        let sigma_pop = Self::matrix(&self.sigma_pop, self.dim, "sigma_pop")?;
        let sigma_within = Self::matrix(&self.sigma_within, self.dim, "sigma_within")?;
        let l_pop = psd_factor(&sigma_pop.symmetrize())?;
        let l_within = psd_factor(&sigma_within.symmetrize())?;
        let mixtures = match &self.multimodal {
            None => None,
            Some(list) => {
                if list.len() != self.classes {
                    return Err(Error::InvalidSpec(format!(
                        "{} mixtures for {} classes",
                        list.len(),
                        self.classes
                    )));
                }
                let mut compiled = Vec::with_capacity(list.len());
                for (c, mix) in list.iter().enumerate() {
                    if mix.components.is_empty() {
                        return Err(Error::InvalidSpec(format!("class {c} has no components")));
                    }
                    if mix.components.iter().any(|k| k.mean.len() != self.dim) {
                        return Err(Error::InvalidSpec(format!(
                            "class {c} component mean dimension mismatch"
                        )));
                    }
                    let total: f64 = mix.components.iter().map(|k| k.weight).sum();
                    if (total - 1.0).abs() > 1e-9 || mix.components.iter().any(|k| k.weight < 0.0) {
                        return Err(Error::InvalidSpec(format!(
                            "class {c} weights must be non-negative and sum to 1 (sum {total})"
                        )));
                    }
                    let index = WeightedIndex::new(mix.components.iter().map(|k| k.weight))
                        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                    compiled.push((mix.clone(), index));
                }
                Some(compiled)
            }
        };
        Ok(CompiledSpec {
            l_pop,
            l_within,
            mixtures,
        })
    }

    /// The unimodal spec as a closed-form task model (for the theory
    /// operations); multimodal specs have no single Gaussian model.
    pub fn to_model(&self) -> Result<GaussianTaskModel> {
        if self.multimodal.is_some() {
            return Err(Error::InvalidSpec(
                "multimodal spec has no Gaussian task model".into(),
            ));
        }
        self.validate()?;
        GaussianTaskModel::new(
            ClassMeanDistribution::Gaussian {
                mu: self.mean.clone(),
                sigma_pop: Matrix::from_rows(&self.sigma_pop).symmetrize(),
            },
            Matrix::from_rows(&self.sigma_within).symmetrize(),
            self.shots,
            self.classes,
            self.queries,
        )
    }
}

struct CompiledSpec {
    l_pop: Matrix<f64>,
    l_within: Matrix<f64>,
    mixtures: Option<Vec<(ClassMixture, WeightedIndex<f64>)>>,
}

impl CompiledSpec {
    fn noise(&self, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
        let z: Vec<f64> = (0..self.l_within.rows())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.l_within.matvec(&z)
    }
}

/// One task drawn from the spec, deterministic per seed.
pub fn sample_task(spec: &SyntheticSpec, seed: u64) -> Result<Task<f64>> {
    let compiled = spec.compile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_task_rng(spec, &compiled, &mut rng)
}

/// One task from substream `stream` of the root seed, so batch drivers
/// can derive independent episodes from a single recorded seed.
pub fn sample_task_stream(spec: &SyntheticSpec, seed: u64, stream: u64) -> Result<Task<f64>> {
    let compiled = spec.compile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    sample_task_rng(spec, &compiled, &mut rng)
}

fn sample_task_rng(
    spec: &SyntheticSpec,
    compiled: &CompiledSpec,
    rng: &mut impl Rng,
) -> Result<Task<f64>> {
    let class_means: Vec<Vec<f64>> = match &compiled.mixtures {
        Some(_) => Vec::new(),
        None => (0..spec.classes)
            .map(|_| {
                let z: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let lz = compiled.l_pop.matvec(&z);
                spec.mean.iter().zip(&lz).map(|(&a, &b)| a + b).collect()
            })
            .collect(),
    };
    let draw_set = |per_class: usize, rng: &mut dyn RngCore| -> LabeledSet<f64> {
        let mut points = Vec::with_capacity(spec.classes * per_class);
        let mut labels = Vec::with_capacity(spec.classes * per_class);
        for c in 0..spec.classes {
            for _ in 0..per_class {
                let center: &[f64] = match &compiled.mixtures {
                    Some(mixes) => {
                        let (mix, index) = &mixes[c];
                        &mix.components[index.sample(rng)].mean
                    }
                    None => &class_means[c],
                };
                let noise = compiled.noise(rng);
                points.push(center.iter().zip(&noise).map(|(&a, &b)| a + b).collect());
                labels.push(c);
            }
        }
        LabeledSet::new(points, labels, spec.classes).expect("spec-shaped set is valid")
    };
    let support = draw_set(spec.shots, rng);
    let query = draw_set(spec.queries, rng);
    Task::new(support, query)
}

/// Labeled feature vectors with a per-class record index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    by_class: Vec<Vec<usize>>,
}

impl FeatureDataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} points with {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::dim("dataset records differ in dimension"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite);
        }
        let classes = labels.iter().max().unwrap() + 1;
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        if let Some(c) = by_class.iter().position(|ids| ids.is_empty()) {
            return Err(Error::EmptyClass { class: c });
        }
        Ok(FeatureDataset {
            points,
            labels,
            by_class,
        })
    }

    /// A dataset materialized from a synthetic spec: class means drawn
    /// once, then `per_class` records per class.
    pub fn synthesize(spec: &SyntheticSpec, per_class: usize, seed: u64) -> Result<Self> {
        let widened = SyntheticSpec {
            shots: per_class,
            queries: 1,
            ..spec.clone()
        };
        let task = sample_task(&widened, seed)?;
        Ok(FeatureDataset::new(
            task.support().points().to_vec(),
            task.support().labels().to_vec(),
        )?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.by_class.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_records(&self, c: usize) -> &[usize] {
        &self.by_class[c]
    }

    pub fn global_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for p in &self.points {
            for (m, &v) in mean.iter_mut().zip(p) {
                *m += v / self.points.len() as f64;
            }
        }
        mean
    }

    /// Covariance of all records around the global mean.
    pub fn total_covariance(&self) -> Matrix<f64> {
        let mean = self.global_mean();
        let m = self.dim();
        let mut cov = Matrix::zeros(m, m);
        let inv_n = 1.0 / self.points.len() as f64;
        for p in &self.points {
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]) * inv_n;
                }
            }
        }
        cov
    }

    pub fn map_points(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        FeatureDataset::new(self.points.iter().map(|p| f(p)).collect(), self.labels.clone())
    }

    /// Reads the `label,f0,f1,…` CSV format.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.get(0) != Some("label") {
            return Err(Error::InvalidSpec(format!(
                "dataset CSV must start with a `label` column, found {:?}",
                headers.get(0)
            )));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let label: usize = record
                .get(0)
                .unwrap_or_default()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad label {:?}", record.get(0))))?;
            let features: Vec<f64> = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidSpec(format!("bad feature value {v:?}")))
                })
                .collect::<Result<_>>()?;
            labels.push(label);
            points.push(features);
        }
        FeatureDataset::new(points, labels)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|i| format!("f{i}")));
        writer.write_record(&header).map_err(csv_err)?;
        for (p, &l) in self.points.iter().zip(&self.labels) {
            let mut row = vec![l.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            writer.write_record(&row).map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

/// An episode drawn from a dataset, with the record ids it used.
#[derive(Debug, Clone)]
pub struct EpisodeDraw {
    pub task: Task<f64>,
    /// Original dataset labels of the episode's classes, in episode
    /// class order.
    pub class_labels: Vec<usize>,
    pub support_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
}

/// Samples `classes` classes without replacement, then `shots + queries`
/// records per class without replacement, split disjointly.
pub fn sample_episode(
    ds: &FeatureDataset,
    classes: usize,
    shots: usize,
    queries: usize,
    seed: u64,
) -> Result<EpisodeDraw> {
    sample_episode_rng(ds, classes, shots, queries, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_episode_rng(
    ds: &FeatureDataset,
    classes: usize,
    shots: usize,
    queries: usize,
    rng: &mut impl Rng,
) -> Result<EpisodeDraw> {
    if classes < 2 || shots == 0 || queries == 0 {
        return Err(Error::InvalidSpec(format!(
            "need classes >= 2, shots >= 1, queries >= 1 (got {classes}, {shots}, {queries})"
        )));
    }
    let need = shots + queries;
    let eligible: Vec<usize> = (0..ds.class_count())
        .filter(|&c| ds.class_records(c).len() >= need)
        .collect();
    if eligible.len() < classes {
        return Err(Error::InsufficientData(format!(
            "{} classes have >= {need} records, episode needs {classes}",
            eligible.len()
        )));
    }
    let chosen = rand::seq::index::sample(rng, eligible.len(), classes);
    let class_labels: Vec<usize> = chosen.iter().map(|i| eligible[i]).collect();

    let mut support_ids = Vec::with_capacity(classes * shots);
    let mut query_ids = Vec::with_capacity(classes * queries);
    for &orig in &class_labels {
        let records = ds.class_records(orig);
        let picks = rand::seq::index::sample(rng, records.len(), need);
        for (slot, i) in picks.iter().enumerate() {
            if slot < shots {
                support_ids.push(records[i]);
            } else {
                query_ids.push(records[i]);
            }
        }
    }

    let build = |ids: &[usize], per_class: usize| -> LabeledSet<f64> {
        let points = ids.iter().map(|&i| ds.points()[i].clone()).collect();
        let labels = (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
        LabeledSet::new(points, labels, classes).expect("episode shape is valid")
    };
    let task = Task::new(build(&support_ids, shots), build(&query_ids, queries))?;
    Ok(EpisodeDraw {
        task,
        class_labels,
        support_ids,
        query_ids,
    })
}

/// Mixup toward a single fixed target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    /// Interpolation ratio in `[0, 1)`.
    pub lambda: f64,
    /// The fixed mix partner; defaults to the dataset's global mean.
    pub mix_target: Vec<f64>,
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidSpec(format!(
                "mixup lambda must be in [0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `(1 - λ) x + λ x_mix`.
pub fn mixup(x: &[f64], cfg: &MixupConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != cfg.mix_target.len() {
        return Err(Error::dim(format!(
            "mixup of a {}-vector with a {}-target",
            x.len(),
            cfg.mix_target.len()
        )));
    }
    Ok(x.iter()
        .zip(&cfg.mix_target)
        .map(|(&v, &t)| (1.0 - cfg.lambda) * v + cfg.lambda * t)
        .collect())
}

/// Settings of the covariance-ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub classes: usize,
    pub shots: usize,
    pub queries: usize,
    /// Episodes averaged per (λ, extractor) cell.
    pub episodes: usize,
    pub lambda_grid: Vec<f64>,
    /// Shared-projection extractors to compare (per-class has no single
    /// covariance ratio).
    pub extractors: Vec<ExtractorConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            classes: 2,
            shots: 10,
            queries: 5,
            episodes: 50,
            lambda_grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            extractors: vec![
                ExtractorConfig::Identity,
                ExtractorConfig::LfdaShared {
                    dim: Some(1),
                    affinity: Default::default(),
                },
            ],
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub extractor: String,
    pub trace_ratio: f64,
    pub stderr: f64,
}

/// Scale of the fixed absolute ridge added to the between covariance in
/// sweep ratios, relative to the unmixed dataset's mean between-variance.
const SWEEP_RIDGE_SCALE: f64 = 1e-3;

/// Tr(Σ_F⁻¹ Σ_{F,c}) per extractor across the mixup grid.
///
/// The between matrix gets a small *absolute* ridge computed once from
/// the unmixed data and held fixed across λ. Without it the ratio is
/// exactly invariant under mixup's uniform `(1 - λ)²` contraction and
/// every curve is flat; with it, rank-deficient between covariances (the
/// identity extractor in more dimensions than `C - 1`) respond to the
/// contraction while well-conditioned projected ones barely move — the
/// regularized quantity any practical estimator works with.
pub fn cov_ratio_sweep(
    ds: &FeatureDataset,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if cfg.lambda_grid.is_empty() || cfg.episodes == 0 || cfg.extractors.is_empty() {
        return Err(Error::InvalidSpec(
            "sweep needs a non-empty lambda grid, episodes >= 1, and extractors".into(),
        ));
    }
    for &l in &cfg.lambda_grid {
        if !(0.0..1.0).contains(&l) {
            return Err(Error::InvalidSpec(format!("lambda {l} outside [0, 1)")));
        }
    }
    let mix_target = ds.global_mean();

    // Fixed ridge from the unmixed between covariance under identity.
    let ridge = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let draw = sample_episode_rng(ds, cfg.classes, cfg.shots, cfg.queries, &mut rng)?;
        let f = crate::projection::identity_projection(ds.dim());
        let (between, _) = projected_covariances(draw.task.support(), &f)?;
        (SWEEP_RIDGE_SCALE * between.trace() / ds.dim() as f64).max(1e-12)
    };

    let mut rows = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let mix = MixupConfig {
            lambda,
            mix_target: mix_target.clone(),
        };
        for extractor in &cfg.extractors {
            let mut ratios = Vec::with_capacity(cfg.episodes);
            for e in 0..cfg.episodes {
                // Stream e is shared across λ and extractors, pairing the
                // cells episode-by-episode.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(e as u64 + 1);
                let draw = sample_episode_rng(ds, cfg.classes, cfg.shots, cfg.queries, &mut rng)?;
                let support = draw.task.support().map_points(|p| {
                    mixup(p, &mix).expect("dimensions fixed by dataset")
                })?;
                let f = match extractor.build(&support)? {
                    Projections::Shared(f) => f,
                    Projections::PerClass(_) => {
                        return Err(Error::InvalidSpec(
                            "covariance-ratio sweep needs shared-projection extractors".into(),
                        ))
                    }
                };
                let (between, per_class) = projected_covariances(&support, &f)?;
                let n = f.output_dim();
                let mut within = Matrix::zeros(n, n);
                for w in &per_class {
                    within = within.add(&w.scale(1.0 / per_class.len() as f64));
                }
                let ratio = trace_of_solve(&between.add_diag(ridge), &within)?;
                ratios.push(ratio);
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let stderr = if ratios.len() > 1 {
                let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                    / (ratios.len() - 1) as f64;
                (var / ratios.len() as f64).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                lambda,
                extractor: extractor.name().to_string(),
                trace_ratio: mean,
                stderr,
            });
        }
    }
    Ok(rows)
}

/// Writes sweep rows as `lambda,extractor,trace_ratio,stderr`.
pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
