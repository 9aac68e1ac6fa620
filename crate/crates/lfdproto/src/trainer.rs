//! Episodic training of a small parametric embedder.
//!
//! The per-episode projection is recomputed from each task's embedded
//! support set but treated as a constant during differentiation
//! (stop-gradient through the eigenproblem): the analytic gradients here
//! match central finite differences of the *frozen-projection* loss,
//! which `loss_with_projections` exposes for exactly that check.

use crate::episode::{ExtractorConfig, LossVariant, Task};
use crate::projection::Projections;
use crate::scatter::LabeledSet;
use crate::{Error, Result};
use rand::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Architecture of the embedder; parameters live in one flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderKind {
    Identity { dim: usize },
    /// `z = W x + b`, parameters `[vec(W) row-major, b]`.
    Linear { input: usize, output: usize },
    /// `z = W2 tanh(W1 x + b1) + b2`, parameters
    /// `[vec(W1), b1, vec(W2), b2]`.
    OneHiddenLayer {
        input: usize,
        hidden: usize,
        output: usize,
    },
}

impl EmbedderKind {
    pub fn input_dim(&self) -> usize {
        match *self {
            EmbedderKind::Identity { dim } => dim,
            EmbedderKind::Linear { input, .. } => input,
            EmbedderKind::OneHiddenLayer { input, .. } => input,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            EmbedderKind::Identity { dim } => dim,
            EmbedderKind::Linear { output, .. } => output,
            EmbedderKind::OneHiddenLayer { output, .. } => output,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            EmbedderKind::Identity { .. } => 0,
            EmbedderKind::Linear { input, output } => output * input + output,
            EmbedderKind::OneHiddenLayer {
                input,
                hidden,
                output,
            } => hidden * input + hidden + output * hidden + output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    kind: EmbedderKind,
    theta: Vec<f64>,
}

impl Embedder {
    pub fn new(kind: EmbedderKind, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != kind.param_count() {
            return Err(Error::InvalidModel(format!(
                "{:?} needs {} parameters, got {}",
                kind,
                kind.param_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(Embedder { kind, theta })
    }

    pub fn identity(dim: usize) -> Self {
        Embedder {
            kind: EmbedderKind::Identity { dim },
            theta: Vec::new(),
        }
    }

    /// A linear embedder initialized to the identity map.
    pub fn linear_identity(dim: usize) -> Self {
        let kind = EmbedderKind::Linear {
            input: dim,
            output: dim,
        };
        let mut theta = vec![0.0; kind.param_count()];
        for i in 0..dim {
            theta[i * dim + i] = 1.0;
        }
        Embedder { kind, theta }
    }

    /// Small random initialization (scale 0.3), deterministic per rng.
    pub fn random(kind: EmbedderKind, rng: &mut impl Rng) -> Self {
        let theta = (0..kind.param_count())
            .map(|_| 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Embedder { kind, theta }
    }

    pub fn kind(&self) -> EmbedderKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.kind.input_dim() {
            return Err(Error::dim(format!(
                "embedder expects dimension {}, input has {}",
                self.kind.input_dim(),
                x.len()
            )));
        }
        Ok(match self.kind {
            EmbedderKind::Identity { .. } => x.to_vec(),
            EmbedderKind::Linear { input, output } => affine(&self.theta, 0, output, input, x),
            EmbedderKind::OneHiddenLayer {
                input,
                hidden,
                output,
            } => {
                let h: Vec<f64> = affine(&self.theta, 0, hidden, input, x)
                    .iter()
                    .map(|v| v.tanh())
                    .collect();
                affine(&self.theta, hidden * input + hidden, output, hidden, &h)
            }
        })
    }

    /// Maps a whole task through the embedder.
    pub fn embed_task(&self, task: &Task<f64>) -> Result<Task<f64>> {
        let map = |s: &LabeledSet<f64>| -> Result<LabeledSet<f64>> {
            let mut out = Vec::with_capacity(s.len());
            for p in s.points() {
                out.push(self.forward(p)?);
            }
            LabeledSet::new(out, s.labels().to_vec(), s.class_count())
        };
        Task::new(map(task.support())?, map(task.query())?)
    }

    /// Accumulates `dL/dθ` from `dL/dz` at input `x`.
    fn backprop(&self, x: &[f64], dz: &[f64], grad: &mut [f64]) {
        match self.kind {
            EmbedderKind::Identity { .. } => {}
            EmbedderKind::Linear { input, output } => {
                accumulate_affine(grad, 0, output, input, x, dz);
            }
            EmbedderKind::OneHiddenLayer {
                input,
                hidden,
                output,
            } => {
                let pre = affine(&self.theta, 0, hidden, input, x);
                let h: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
                let off2 = hidden * input + hidden;
                accumulate_affine(grad, off2, output, hidden, &h, dz);
                // dh = W2^T dz, then through tanh'.
                let mut da = vec![0.0; hidden];
                for o in 0..output {
                    for j in 0..hidden {
                        da[j] += self.theta[off2 + o * hidden + j] * dz[o];
                    }
                }
                for (a, &hv) in da.iter_mut().zip(&h) {
                    *a *= 1.0 - hv * hv;
                }
                accumulate_affine(grad, 0, hidden, input, x, &da);
            }
        }
    }
}

/// `W x + b` with `W` (rows x cols) row-major at `offset`, `b` after it.
fn affine(theta: &[f64], offset: usize, rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let row = &theta[offset + r * cols..offset + (r + 1) * cols];
            row.iter().zip(x).map(|(&w, &v)| w * v).sum::<f64>() + theta[offset + rows * cols + r]
        })
        .collect()
}

fn accumulate_affine(
    grad: &mut [f64],
    offset: usize,
    rows: usize,
    cols: usize,
    x: &[f64],
    dz: &[f64],
) {
    for r in 0..rows {
        for c in 0..cols {
            grad[offset + r * cols + c] += dz[r] * x[c];
        }
        grad[offset + rows * cols + r] += dz[r];
    }
}

/// Projections for one task's embedded support set.
pub fn episode_projections(
    e: &Embedder,
    task: &Task<f64>,
    extractor: &ExtractorConfig,
) -> Result<Projections<f64>> {
    let embedded = e.embed_task(task)?;
    extractor.build(embedded.support())
}

struct EpisodeForward {
    support: Vec<Vec<f64>>,
    query: Vec<Vec<f64>>,
}

fn embed_points(e: &Embedder, s: &LabeledSet<f64>) -> Result<Vec<Vec<f64>>> {
    s.points().iter().map(|p| e.forward(p)).collect()
}

/// Per-class prototypes of the embedded support under the projections.
fn projected_prototypes(
    support: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    shots: usize,
    projections: &Projections<f64>,
) -> Result<Vec<Vec<f64>>> {
    let mut protos: Vec<Vec<f64>> = (0..classes)
        .map(|c| vec![0.0; projections.for_class(c).output_dim()])
        .collect();
    for (z, &l) in support.iter().zip(labels) {
        let p = projections.for_class(l).project(z)?;
        for (acc, v) in protos[l].iter_mut().zip(&p) {
            *acc += v / shots as f64;
        }
    }
    Ok(protos)
}

/// Loss (and optionally the stop-gradient parameter gradient) of one
/// episode under fixed projections.
fn episode_loss_grad(
    e: &Embedder,
    task: &Task<f64>,
    forward: &EpisodeForward,
    projections: &Projections<f64>,
    loss: LossVariant,
    weight: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let classes = task.class_count();
    let shots = task.shots();
    let protos = projected_prototypes(
        &forward.support,
        task.support().labels(),
        classes,
        shots,
        projections,
    )?;

    let mut total = 0.0;
    // dL/dz accumulated per embedded point, then backpropagated once.
    let mut d_support: Vec<Vec<f64>> =
        forward.support.iter().map(|z| vec![0.0; z.len()]).collect();
    let mut d_query: Vec<Vec<f64>> = forward.query.iter().map(|z| vec![0.0; z.len()]).collect();
    let want_grad = grad.is_some();

    for (qi, (zq, &label)) in forward
        .query
        .iter()
        .zip(task.query().labels())
        .enumerate()
    {
        // Residuals u_s - c_s per class, in class s's projected space.
        let mut residuals = Vec::with_capacity(classes);
        let mut distances = Vec::with_capacity(classes);
        for (s, proto) in protos.iter().enumerate() {
            let u = projections.for_class(s).project(zq)?;
            let r: Vec<f64> = u.iter().zip(proto).map(|(&a, &b)| a - b).collect();
            distances.push(r.iter().map(|v| v * v).sum::<f64>());
            residuals.push(r);
        }
        total += crate::episode::loss_from_distances(&distances, label, loss)?;
        if !want_grad {
            continue;
        }

        // gamma_s = dg/dd_s via the max-shifted softmax over -d.
        let mut gamma = vec![0.0; classes];
        match loss {
            LossVariant::Paper => {
                let max = distances
                    .iter()
                    .enumerate()
                    .filter(|&(s, _)| s != label)
                    .map(|(_, &d)| -d)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (s, &d) in distances.iter().enumerate() {
                    if s != label {
                        z += (-d - max).exp();
                    }
                }
                for (s, &d) in distances.iter().enumerate() {
                    gamma[s] = if s == label {
                        1.0
                    } else {
                        -(-d - max).exp() / z
                    };
                }
            }
            LossVariant::StandardSoftmax => {
                let max = distances.iter().map(|&d| -d).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = distances.iter().map(|&d| (-d - max).exp()).sum();
                for (s, &d) in distances.iter().enumerate() {
                    let p = (-d - max).exp() / z;
                    gamma[s] = if s == label { 1.0 - p } else { -p };
                }
            }
        }

        for s in 0..classes {
            if gamma[s] == 0.0 {
                continue;
            }
            // dd_s/dz_q = 2 W_s r_s; dd_s/dz_i = -(2/k) W_s r_s for
            // support points of class s (through the prototype mean).
            let w = projections.for_class(s).matrix();
            let pull = w.matvec(&residuals[s]);
            let cq = 2.0 * gamma[s] * weight;
            for (acc, &v) in d_query[qi].iter_mut().zip(&pull) {
                *acc += cq * v;
            }
            let cs = -2.0 * gamma[s] * weight / shots as f64;
            for (i, &l) in task.support().labels().iter().enumerate() {
                if l == s {
                    for (acc, &v) in d_support[i].iter_mut().zip(&pull) {
                        *acc += cs * v;
                    }
                }
            }
        }
    }

    if let Some(grad) = grad {
        for (x, dz) in task.support().points().iter().zip(&d_support) {
            e.backprop(x, dz, grad);
        }
        for (x, dz) in task.query().points().iter().zip(&d_query) {
            e.backprop(x, dz, grad);
        }
    }
    Ok(total / forward.query.len() as f64)
}

/// Batch loss under externally supplied (frozen) projections, one
/// `Projections` per task — the function whose finite differences the
/// analytic gradient must match.
pub fn loss_with_projections(
    e: &Embedder,
    tasks: &[Task<f64>],
    projections: &[Projections<f64>],
    loss: LossVariant,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    if tasks.len() != projections.len() {
        return Err(Error::dim(format!(
            "{} tasks with {} projection sets",
            tasks.len(),
            projections.len()
        )));
    }
    let mut total = 0.0;
    for (task, projs) in tasks.iter().zip(projections) {
        let forward = EpisodeForward {
            support: embed_points(e, task.support())?,
            query: embed_points(e, task.query())?,
        };
        total += episode_loss_grad(e, task, &forward, projs, loss, 0.0, None)?;
    }
    Ok(total / tasks.len() as f64)
}

/// Batch loss and stop-gradient parameter gradient; projections are
/// rebuilt from each task's embedded support and then held constant.
pub fn loss_and_grad(
    e: &Embedder,
    tasks: &[Task<f64>],
    extractor: &ExtractorConfig,
    loss: LossVariant,
) -> Result<(f64, Vec<f64>)> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let mut grad = vec![0.0; e.kind.param_count()];
    let mut total = 0.0;
    let weight = 1.0 / tasks.len() as f64;
    for task in tasks {
        let forward = EpisodeForward {
            support: embed_points(e, task.support())?,
            query: embed_points(e, task.query())?,
        };
        let embedded_support = LabeledSet::new(
            forward.support.clone(),
            task.support().labels().to_vec(),
            task.class_count(),
        )?;
        let projections = extractor.build(&embedded_support)?;
        // Per-query weight folded in so grad accumulates the batch mean.
        let per_query_weight = weight / forward.query.len() as f64;
        total += weight
            * episode_loss_grad(
                e,
                task,
                &forward,
                &projections,
                loss,
                per_query_weight,
                Some(&mut grad),
            )?;
    }
    Ok((total, grad))
}

/// Mean query accuracy of the embedded tasks under the extractor.
pub fn evaluate(e: &Embedder, tasks: &[Task<f64>], extractor: &ExtractorConfig) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let mut total = 0.0;
    for task in tasks {
        let embedded = e.embed_task(task)?;
        total +=
            crate::episode::run_episode(&embedded, extractor, LossVariant::Paper)?.accuracy;
    }
    Ok(total / tasks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub tasks_per_update: usize,
    pub step_size: f64,
    /// Momentum coefficient; 0 is plain gradient descent.
    #[serde(default)]
    pub momentum: f64,
    pub seed: u64,
    pub extractor: ExtractorConfig,
    pub loss: LossVariant,
    /// Evaluate on the validation tasks every this many iterations
    /// (0 disables periodic validation).
    #[serde(default)]
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100,
            tasks_per_update: 4,
            step_size: 1e-2,
            momentum: 0.0,
            seed: 0,
            extractor: ExtractorConfig::Identity,
            loss: LossVariant::Paper,
            validate_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub embedder: Embedder,
    /// Training loss at each iteration, before the update.
    pub loss_trace: Vec<f64>,
    /// `(iteration, accuracy)` validation points.
    pub validation: Vec<(usize, f64)>,
}

/// Fixed-step (optionally momentum) gradient descent over a task stream;
/// `next_batch(i)` supplies iteration `i`'s tasks deterministically.
pub fn train(
    mut e: Embedder,
    next_batch: impl Fn(usize) -> Result<Vec<Task<f64>>>,
    validation_tasks: Option<&[Task<f64>]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.iterations == 0 || cfg.step_size <= 0.0 {
        return Err(Error::Config(format!(
            "need iterations >= 1 and step_size > 0 (got {}, {})",
            cfg.iterations, cfg.step_size
        )));
    }
    let mut loss_trace = Vec::with_capacity(cfg.iterations);
    let mut validation = Vec::new();
    let mut velocity = vec![0.0; e.kind.param_count()];
    for i in 0..cfg.iterations {
        let tasks = next_batch(i)?;
        let (loss, grad) = loss_and_grad(&e, &tasks, &cfg.extractor, cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::DivergenceDetected { iteration: i, loss });
        }
        loss_trace.push(loss);
        for ((t, v), g) in e.theta.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v - cfg.step_size * g;
            *t += *v;
        }
        if let (Some(val), true) = (
            validation_tasks,
            cfg.validate_every > 0 && (i + 1) % cfg.validate_every == 0,
        ) {
            validation.push((i + 1, evaluate(&e, val, &cfg.extractor)?));
        }
    }
    Ok(TrainOutcome {
        embedder: e,
        loss_trace,
        validation,
    })
}

/// JSON checkpoint of an embedder plus training position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: EmbedderKind,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub iteration: usize,
}

impl Checkpoint {
    pub fn of(e: &Embedder, seed: u64, iteration: usize) -> Self {
        Checkpoint {
            kind: e.kind,
            theta: e.theta.clone(),
            seed,
            iteration,
        }
    }

    pub fn embedder(&self) -> Result<Embedder> {
        Embedder::new(self.kind, self.theta.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
