//! One few-shot episode: projections from the support set, class
//! prototypes in the projected space, nearest-prototype classification,
//! and the episodic loss.
//!
//! Projections are computed from the support set only; queries never
//! influence them. In per-class mode each candidate class projects the
//! query with its own matrix and the resulting squared distances are
//! compared numerically across the per-class spaces, the literal reading
//! of the per-class classification rule.

use crate::projection::{
    fda_projection, identity_projection, lfda_projection_per_class, lfda_projection_shared,
    Projections,
};
use crate::scatter::{affinity_scaled, AffinityScaling, LabeledSet};
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};

/// A support/query pair for one episode.
#[derive(Debug, Clone)]
pub struct Task<T> {
    support: LabeledSet<T>,
    query: LabeledSet<T>,
    shots: usize,
    queries_per_class: usize,
}

impl<T: Real> Task<T> {
    pub fn new(support: LabeledSet<T>, query: LabeledSet<T>) -> Result<Self> {
        if support.class_count() != query.class_count() {
            return Err(Error::InvalidSpec(format!(
                "support has {} classes, query has {}",
                support.class_count(),
                query.class_count()
            )));
        }
        if support.dim() != query.dim() {
            return Err(Error::dim(format!(
                "support dimension {} vs query dimension {}",
                support.dim(),
                query.dim()
            )));
        }
        let shots = support.uniform_class_size()?;
        let queries_per_class = query.uniform_class_size()?;
        Ok(Task {
            support,
            query,
            shots,
            queries_per_class,
        })
    }

    pub fn support(&self) -> &LabeledSet<T> {
        &self.support
    }

    pub fn query(&self) -> &LabeledSet<T> {
        &self.query
    }

    pub fn class_count(&self) -> usize {
        self.support.class_count()
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn queries_per_class(&self) -> usize {
        self.queries_per_class
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }
}

/// Affinity kernel settings for the local extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityConfig {
    /// Global kernel bandwidth; 1.0 is the bare squared-exponential kernel.
    pub bandwidth: f64,
    /// Switch to per-point bandwidths (7th same-class neighbor distance).
    pub local_scaling: bool,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        AffinityConfig {
            bandwidth: 1.0,
            local_scaling: false,
        }
    }
}

impl AffinityConfig {
    fn scaling(&self) -> AffinityScaling {
        if self.local_scaling {
            AffinityScaling::LocalScaling
        } else {
            AffinityScaling::Global
        }
    }
}

/// How the per-episode projection is built from the support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExtractorConfig {
    /// Plain prototype classification in the embedding space.
    Identity,
    /// Fisher discriminant directions; `dim` defaults to `C - 1`.
    Fda { dim: Option<usize> },
    /// One shared local Fisher projection; `dim` defaults to
    /// `min(kC - 1, m)`.
    LfdaShared {
        dim: Option<usize>,
        #[serde(default)]
        affinity: AffinityConfig,
    },
    /// One local Fisher projection per class (the default extractor).
    LfdaPerClass {
        dim: Option<usize>,
        #[serde(default)]
        affinity: AffinityConfig,
    },
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig::LfdaPerClass {
            dim: None,
            affinity: AffinityConfig::default(),
        }
    }
}

impl ExtractorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExtractorConfig::Identity => "identity",
            ExtractorConfig::Fda { .. } => "fda",
            ExtractorConfig::LfdaShared { .. } => "lfda-shared",
            ExtractorConfig::LfdaPerClass { .. } => "lfda-perclass",
        }
    }

    /// Builds the projection(s) for a support set.
    pub fn build<T: Real>(&self, support: &LabeledSet<T>) -> Result<Projections<T>> {
        let c = support.class_count();
        let total = support.len();
        let m = support.dim();
        match self {
            ExtractorConfig::Identity => Ok(Projections::Shared(identity_projection(m))),
            ExtractorConfig::Fda { dim } => {
                let n = dim.unwrap_or_else(|| (c - 1).min(m).max(1));
                Ok(Projections::Shared(fda_projection(support, n)?))
            }
            ExtractorConfig::LfdaShared { dim, affinity } => {
                let n = dim.unwrap_or_else(|| (total - 1).min(m).max(1));
                let a = affinity_scaled(support, T::real(affinity.bandwidth), affinity.scaling())?;
                Ok(Projections::Shared(lfda_projection_shared(support, &a, n)?))
            }
            ExtractorConfig::LfdaPerClass { dim, affinity } => {
                let n = dim.unwrap_or_else(|| (total - 1).min(m).max(1));
                let a = affinity_scaled(support, T::real(affinity.bandwidth), affinity.scaling())?;
                Ok(Projections::PerClass(lfda_projection_per_class(
                    support, &a, n,
                )?))
            }
        }
    }
}

/// Which episodic loss is computed per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// True-class distance plus log-sum-exp over the *other* classes only.
    Paper,
    /// Conventional cross-entropy of the distance softmax over all classes.
    StandardSoftmax,
}

impl Default for LossVariant {
    fn default() -> Self {
        LossVariant::Paper
    }
}

/// Per-class prototypes in the projected space(s).
#[derive(Debug, Clone)]
pub struct PrototypeSet<T> {
    vectors: Vec<Vec<T>>,
    projections: Projections<T>,
}

impl<T: Real> PrototypeSet<T> {
    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn projections(&self) -> &Projections<T> {
        &self.projections
    }

    pub fn class_count(&self) -> usize {
        self.vectors.len()
    }

    /// Squared distance from a raw query vector to class `c`'s prototype,
    /// in class `c`'s projected space.
    pub fn distance_to_class(&self, raw_query: &[T], c: usize) -> Result<T> {
        let projected = self.projections.for_class(c).project(raw_query)?;
        sq_dist(&projected, &self.vectors[c])
    }
}

/// Class prototypes: the mean of the projected support vectors per class.
pub fn prototypes<T: Real>(
    support: &LabeledSet<T>,
    projections: &Projections<T>,
) -> Result<PrototypeSet<T>> {
    if projections.input_dim() != support.dim() {
        return Err(Error::dim(format!(
            "projection expects dimension {}, support has {}",
            projections.input_dim(),
            support.dim()
        )));
    }
    let mut vectors = Vec::with_capacity(support.class_count());
    for c in 0..support.class_count() {
        let f = projections.for_class(c);
        let idx = support.class_indices(c);
        let inv_k = T::one() / T::from_usize(idx.len()).unwrap();
        let mut proto = vec![T::zero(); f.output_dim()];
        for &i in &idx {
            let p = f.project(&support.points()[i])?;
            for (acc, v) in proto.iter_mut().zip(&p) {
                *acc += *v * inv_k;
            }
        }
        vectors.push(proto);
    }
    Ok(PrototypeSet {
        vectors,
        projections: projections.clone(),
    })
}

/// Squared Euclidean distance.
pub fn sq_dist<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::dim(format!(
            "distance between vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// The per-query loss from precomputed squared distances, computed with a
/// max-shifted log-sum-exp.
pub fn loss_from_distances<T: Real>(
    distances: &[T],
    true_class: usize,
    variant: LossVariant,
) -> Result<T> {
    if distances.len() < 2 {
        return Err(Error::EmptyOthers);
    }
    let d_true = distances[true_class];
    let terms: Vec<T> = match variant {
        LossVariant::Paper => distances
            .iter()
            .enumerate()
            .filter(|&(s, _)| s != true_class)
            .map(|(_, &d)| -d)
            .collect(),
        LossVariant::StandardSoftmax => distances.iter().map(|&d| -d).collect(),
    };
    let max = terms.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let lse = max + terms.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    Ok(d_true + lse)
}

/// The per-query loss given the projected query, the true-class prototype,
/// and the remaining prototypes.
pub fn loss_g<T: Real>(
    query_proj: &[T],
    proto_true: &[T],
    protos_other: &[Vec<T>],
) -> Result<T> {
    if protos_other.is_empty() {
        return Err(Error::EmptyOthers);
    }
    let mut distances = vec![sq_dist(query_proj, proto_true)?];
    for p in protos_other {
        distances.push(sq_dist(query_proj, p)?);
    }
    loss_from_distances(&distances, 0, LossVariant::Paper)
}

/// Nearest-prototype classification of a raw query vector.
///
/// Returns the predicted class and the nearest-class score: the distance
/// to the best runner-up minus the distance to the chosen class. Ties go
/// to the lowest class id.
pub fn classify<T: Real>(raw_query: &[T], protos: &PrototypeSet<T>) -> Result<(usize, T)> {
    let distances = class_distances(raw_query, protos)?;
    Ok(pick_nearest(&distances))
}

fn class_distances<T: Real>(raw_query: &[T], protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    (0..protos.class_count())
        .map(|c| protos.distance_to_class(raw_query, c))
        .collect()
}

fn pick_nearest<T: Real>(distances: &[T]) -> (usize, T) {
    let mut best = 0;
    for c in 1..distances.len() {
        if distances[c] < distances[best] {
            best = c;
        }
    }
    let runner_up = distances
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != best)
        .map(|(_, &d)| d)
        .fold(T::infinity(), |m, d| m.min(d));
    (best, runner_up - distances[best])
}

/// Outcome of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult<T> {
    /// Predicted class per query, in query order.
    pub predictions: Vec<usize>,
    /// Episodic loss averaged over the `CM` queries.
    pub mean_loss: T,
    /// Fraction of correctly classified queries.
    pub accuracy: T,
    /// Nearest-class score per query (runner-up minus chosen distance).
    pub alpha_values: Vec<T>,
}

/// Runs one episode: projections and prototypes from the support set,
/// then loss and nearest-prototype classification for every query.
pub fn run_episode<T: Real>(
    task: &Task<T>,
    extractor: &ExtractorConfig,
    loss: LossVariant,
) -> Result<EpisodeResult<T>> {
    let projections = extractor.build(task.support())?;
    let protos = prototypes(task.support(), &projections)?;
    let mut predictions = Vec::with_capacity(task.query().len());
    let mut alpha_values = Vec::with_capacity(task.query().len());
    let mut total_loss = T::zero();
    let mut correct = 0usize;
    for (q, &label) in task.query().points().iter().zip(task.query().labels()) {
        let distances = class_distances(q, &protos)?;
        total_loss += loss_from_distances(&distances, label, loss)?;
        let (pred, alpha) = pick_nearest(&distances);
        if pred == label {
            correct += 1;
        }
        predictions.push(pred);
        alpha_values.push(alpha);
    }
    let n = T::from_usize(task.query().len()).unwrap();
    Ok(EpisodeResult {
        predictions,
        mean_loss: total_loss / n,
        accuracy: T::from_usize(correct).unwrap() / n,
        alpha_values,
    })
}

/// Mean episodic loss over a batch of tasks.
pub fn empirical_loss<T: Real>(
    tasks: &[Task<T>],
    extractor: &ExtractorConfig,
    loss: LossVariant,
) -> Result<T> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let mut total = T::zero();
    for t in tasks {
        total += run_episode(t, extractor, loss)?.mean_loss;
    }
    Ok(total / T::from_usize(tasks.len()).unwrap())
}
