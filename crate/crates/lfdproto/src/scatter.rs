//! Scatter and covariance construction: within/between-class scatter in
//! moment form, the equivalent pairwise form, affinity-weighted local
//! scatter, and covariances of projected data.
//!
//! Conventions worth spelling out once:
//!
//! * The pairwise forms carry the weights `P^w = 1/k` (same class) and
//!   `P^b = 1/(kC) - 1/k` (same class) / `1/(kC)` (different class). With
//!   this sign choice the pairwise between-scatter equals `kC` times the
//!   moment-form between-scatter, stays positive semidefinite for any
//!   affinity in `[0, 1]`, and an affinity of all ones reduces the local
//!   forms to the plain pairwise forms exactly. The same-class between
//!   weight appears in the literature with both signs; the positive-sign
//!   variant rewards same-class spread and is not used here.
//! * Both pairwise scatter matrices are `kC` times their moment-form
//!   counterparts; the proportionality constant is pinned by tests.

use crate::linalg::Matrix;
use crate::projection::Projection;
use crate::{Error, Real, Result};

/// Labeled feature vectors: the embedded support or query set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    points: Vec<Vec<T>>,
    labels: Vec<usize>,
    class_count: usize,
    dim: usize,
}

impl<T: Real> LabeledSet<T> {
    /// Builds a labeled set, validating label range, dimensions, and that
    /// every class id below `class_count` occurs at least once.
    pub fn new(points: Vec<Vec<T>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} points with {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::dim("points must share a positive dimension"));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NotFinite);
        }
        let mut seen = vec![false; class_count];
        for &l in &labels {
            if l >= class_count {
                return Err(Error::InvalidSpec(format!(
                    "label {l} out of range for {class_count} classes"
                )));
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::EmptyClass { class: c });
        }
        Ok(LabeledSet {
            points,
            labels,
            class_count,
            dim,
        })
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point indices belonging to class `c`.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == c).collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// The common per-class count, or `UnequalClassSizes`.
    pub fn uniform_class_size(&self) -> Result<usize> {
        let sizes = self.class_sizes();
        let k = sizes[0];
        if sizes.iter().any(|&s| s != k) {
            return Err(Error::UnequalClassSizes { sizes });
        }
        Ok(k)
    }

    /// Applies `f` to every point, keeping labels.
    pub fn map_points(&self, mut f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        LabeledSet::new(
            self.points.iter().map(|p| f(p)).collect(),
            self.labels.clone(),
            self.class_count,
        )
    }
}

/// Which formula produced a scatter pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterKind {
    Fda,
    Lfda,
}

/// A (within, between) pair of symmetric PSD scatter matrices.
#[derive(Debug, Clone)]
pub struct ScatterPair<T> {
    pub within: Matrix<T>,
    pub between: Matrix<T>,
    pub kind: ScatterKind,
}

/// Pairwise affinity matrix with squared-exponential entries.
#[derive(Debug, Clone)]
pub struct AffinityMatrix<T> {
    entries: Matrix<T>,
    bandwidth: T,
}

impl<T: Real> AffinityMatrix<T> {
    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.rows() == 0
    }

    /// All-ones affinity of the given size; degenerates local scatter to
    /// the plain pairwise form.
    pub fn ones(n: usize) -> Self {
        let mut entries = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                entries[(i, j)] = T::one();
            }
        }
        AffinityMatrix {
            entries,
            bandwidth: T::infinity(),
        }
    }
}

fn vec_sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn add_outer<T: Real>(acc: &mut Matrix<T>, v: &[T], weight: T) {
    for i in 0..v.len() {
        let wi = weight * v[i];
        if wi == T::zero() {
            continue;
        }
        for j in 0..v.len() {
            acc[(i, j)] += wi * v[j];
        }
    }
}

fn mean_of<T: Real>(points: &[Vec<T>], indices: &[usize], dim: usize) -> Vec<T> {
    let mut m = vec![T::zero(); dim];
    for &i in indices {
        for (acc, &x) in m.iter_mut().zip(&points[i]) {
            *acc += x;
        }
    }
    let inv = T::one() / T::from_usize(indices.len()).unwrap();
    m.iter_mut().for_each(|x| *x *= inv);
    m
}

/// Per-class means and the global mean.
pub fn class_means<T: Real>(s: &LabeledSet<T>) -> (Vec<Vec<T>>, Vec<T>) {
    let per_class: Vec<Vec<T>> = (0..s.class_count())
        .map(|c| mean_of(s.points(), &s.class_indices(c), s.dim()))
        .collect();
    let all: Vec<usize> = (0..s.len()).collect();
    let global = mean_of(s.points(), &all, s.dim());
    (per_class, global)
}

/// Moment-form within/between scatter:
/// within is the average outer product of deviations about class means,
/// between the average outer product of class-mean deviations about the
/// global mean. Requires equal class sizes.
pub fn fda_scatter<T: Real>(s: &LabeledSet<T>) -> Result<ScatterPair<T>> {
    s.uniform_class_size()?;
    let (mu_c, mu) = class_means(s);
    let m = s.dim();
    let mut within = Matrix::zeros(m, m);
    let inv_n = T::one() / T::from_usize(s.len()).unwrap();
    for (p, &l) in s.points().iter().zip(s.labels()) {
        add_outer(&mut within, &vec_sub(p, &mu_c[l]), inv_n);
    }
    let mut between = Matrix::zeros(m, m);
    let inv_c = T::one() / T::from_usize(s.class_count()).unwrap();
    for mc in &mu_c {
        add_outer(&mut between, &vec_sub(mc, &mu), inv_c);
    }
    Ok(ScatterPair {
        within: within.symmetrize(),
        between: between.symmetrize(),
        kind: ScatterKind::Fda,
    })
}

/// Same-class / different-class pairwise weights shared by the plain and
/// affinity-weighted pairwise forms.
struct PairWeights<T> {
    within_same: T,
    between_same: T,
    between_diff: T,
}

impl<T: Real> PairWeights<T> {
    fn new(k: usize, c: usize) -> Self {
        let k = T::from_usize(k).unwrap();
        let kc = k * T::from_usize(c).unwrap();
        PairWeights {
            within_same: T::one() / k,
            between_same: T::one() / kc - T::one() / k,
            between_diff: T::one() / kc,
        }
    }
}

fn pairwise_scatter_with<T: Real>(
    s: &LabeledSet<T>,
    affinity: Option<&AffinityMatrix<T>>,
) -> Result<ScatterPair<T>> {
    let k = s.uniform_class_size()?;
    if let Some(a) = affinity {
        if a.len() != s.len() {
            return Err(Error::dim(format!(
                "affinity is {}x{} but the set has {} points",
                a.len(),
                a.len(),
                s.len()
            )));
        }
    }
    let w = PairWeights::new(k, s.class_count());
    let m = s.dim();
    let mut within = Matrix::zeros(m, m);
    let mut between = Matrix::zeros(m, m);
    let half = T::real(0.5);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if i == j {
                continue;
            }
            let diff = vec_sub(&s.points()[i], &s.points()[j]);
            let same = s.labels()[i] == s.labels()[j];
            let aff = affinity.map_or(T::one(), |a| a.entries()[(i, j)]);
            if same {
                add_outer(&mut within, &diff, half * aff * w.within_same);
                add_outer(&mut between, &diff, half * aff * w.between_same);
            } else {
                add_outer(&mut between, &diff, half * w.between_diff);
            }
        }
    }
    Ok(ScatterPair {
        within: within.symmetrize(),
        between: between.symmetrize(),
        kind: if affinity.is_some() {
            ScatterKind::Lfda
        } else {
            ScatterKind::Fda
        },
    })
}

/// Pairwise reformulation of [`fda_scatter`]. Proportional to the moment
/// form by the constant factor `kC` (both matrices).
pub fn pairwise_scatter<T: Real>(s: &LabeledSet<T>) -> Result<ScatterPair<T>> {
    pairwise_scatter_with(s, None)
}

/// Whether affinity bandwidths are global or locally scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffinityScaling {
    /// `A_ij = exp(-||x_i - x_j||^2 / bandwidth)`.
    Global,
    /// Per-point bandwidth set to the squared distance to the 7th nearest
    /// same-class neighbor (or the farthest one when fewer exist);
    /// `A_ij = exp(-||x_i - x_j||^2 / (s_i s_j))`.
    LocalScaling,
}

/// Squared-exponential affinity with a global bandwidth. Bandwidth 1 is the
/// bare kernel `exp(-||x_i - x_j||^2)`.
pub fn affinity<T: Real>(s: &LabeledSet<T>, bandwidth: T) -> Result<AffinityMatrix<T>> {
    affinity_scaled(s, bandwidth, AffinityScaling::Global)
}

fn sq_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum()
}

/// Affinity with selectable bandwidth scaling. Local scaling keeps the
/// kernel informative when raw feature scales would saturate it to zero.
pub fn affinity_scaled<T: Real>(
    s: &LabeledSet<T>,
    bandwidth: T,
    scaling: AffinityScaling,
) -> Result<AffinityMatrix<T>> {
    if bandwidth <= T::zero() {
        return Err(Error::InvalidSpec("bandwidth must be positive".into()));
    }
    let n = s.len();
    let mut entries = Matrix::zeros(n, n);
    let local = match scaling {
        AffinityScaling::Global => None,
        AffinityScaling::LocalScaling => Some(local_bandwidths(s)),
    };
    for i in 0..n {
        entries[(i, i)] = T::one();
        for j in (i + 1)..n {
            let d2 = sq_norm(&vec_sub(&s.points()[i], &s.points()[j]));
            let denom = match &local {
                None => bandwidth,
                Some(scales) => (scales[i] * scales[j]).max(T::min_positive_value()),
            };
            let a = (-d2 / denom).exp();
            entries[(i, j)] = a;
            entries[(j, i)] = a;
        }
    }
    Ok(AffinityMatrix { entries, bandwidth })
}

/// Squared distance to the 7th same-class neighbor per point; falls back to
/// the farthest same-class neighbor (or 1) when the class is small.
fn local_bandwidths<T: Real>(s: &LabeledSet<T>) -> Vec<T> {
    const NEIGHBOR: usize = 7;
    (0..s.len())
        .map(|i| {
            let mut dists: Vec<T> = s
                .class_indices(s.labels()[i])
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| sq_norm(&vec_sub(&s.points()[i], &s.points()[j])))
                .collect();
            if dists.is_empty() {
                return T::one();
            }
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = NEIGHBOR.min(dists.len()) - 1;
            dists[idx].max(T::min_positive_value())
        })
        .collect()
}

/// Affinity-weighted local scatter pair. The affinity modulates same-class
/// pair weights only; with an all-ones affinity this equals
/// [`pairwise_scatter`] exactly.
pub fn lfda_scatter<T: Real>(
    s: &LabeledSet<T>,
    a: &AffinityMatrix<T>,
) -> Result<ScatterPair<T>> {
    pairwise_scatter_with(s, Some(a))
}

/// Between-class covariance of projected class means and per-class within
/// covariances of projected points.
///
/// For two classes this is the usual half-sum of the two mean-deviation
/// outer products; for more classes the uniform average over classes is
/// used.
pub fn projected_covariances<T: Real>(
    s: &LabeledSet<T>,
    f: &Projection<T>,
) -> Result<(Matrix<T>, Vec<Matrix<T>>)> {
    if f.input_dim() != s.dim() {
        return Err(Error::dim(format!(
            "projection expects dimension {}, set has {}",
            f.input_dim(),
            s.dim()
        )));
    }
    let n = f.output_dim();
    let (mu_c, mu) = class_means(s);
    let proj_mu: Vec<Vec<T>> = mu_c.iter().map(|m| f.project(m).unwrap()).collect();
    let proj_global = f.project(&mu)?;

    let mut between = Matrix::zeros(n, n);
    let inv_c = T::one() / T::from_usize(s.class_count()).unwrap();
    for pm in &proj_mu {
        add_outer(&mut between, &vec_sub(pm, &proj_global), inv_c);
    }

    let mut per_class = Vec::with_capacity(s.class_count());
    for c in 0..s.class_count() {
        let idx = s.class_indices(c);
        let inv_k = T::one() / T::from_usize(idx.len()).unwrap();
        let mut cov = Matrix::zeros(n, n);
        for &i in &idx {
            let p = f.project(&s.points()[i])?;
            add_outer(&mut cov, &vec_sub(&p, &proj_mu[c]), inv_k);
        }
        per_class.push(cov.symmetrize());
    }
    Ok((between.symmetrize(), per_class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{identity_projection, Projection};

    fn one_d(points: &[f64], labels: &[usize], classes: usize) -> LabeledSet<f64> {
        LabeledSet::new(
            points.iter().map(|&x| vec![x]).collect(),
            labels.to_vec(),
            classes,
        )
        .unwrap()
    }

    /// The worked 1D set: class a = {0, 2}, class b = {4, 6}.
    fn worked_set() -> LabeledSet<f64> {
        one_d(&[0.0, 2.0, 4.0, 6.0], &[0, 0, 1, 1], 2)
    }

    #[test]
    fn class_means_worked_example() {
        let s = worked_set();
        let (mu_c, mu) = class_means(&s);
        assert_eq!(mu_c[0], vec![1.0]);
        assert_eq!(mu_c[1], vec![5.0]);
        assert_eq!(mu, vec![3.0]);
    }

    #[test]
    fn class_means_singletons_and_degenerate() {
        let s = one_d(&[2.5, -1.0], &[0, 1], 2);
        let (mu_c, _) = class_means(&s);
        assert_eq!(mu_c[0], vec![2.5]);
        assert_eq!(mu_c[1], vec![-1.0]);

        let s = one_d(&[3.0, 3.0, 3.0, 3.0], &[0, 0, 1, 1], 2);
        let (mu_c, mu) = class_means(&s);
        assert_eq!(mu_c[0], vec![3.0]);
        assert_eq!(mu_c[1], vec![3.0]);
        assert_eq!(mu, vec![3.0]);
    }

    #[test]
    fn labeled_set_rejects_missing_class() {
        let r = LabeledSet::new(vec![vec![0.0], vec![1.0]], vec![0, 0], 2);
        assert!(matches!(r, Err(Error::EmptyClass { class: 1 })));
    }

    #[test]
    fn fda_scatter_worked_example() {
        // within = (1/4)(1 + 1 + 1 + 1) = 1, between = (1/2)(4 + 4) = 4.
        let p = fda_scatter(&worked_set()).unwrap();
        assert!((p.within[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p.between[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fda_scatter_degenerate_cases() {
        // Every point equals its class mean: within = 0.
        let s = one_d(&[1.0, 1.0, 5.0, 5.0], &[0, 0, 1, 1], 2);
        assert_eq!(fda_scatter(&s).unwrap().within[(0, 0)], 0.0);
        // Single class: between = 0.
        let s = one_d(&[1.0, 3.0], &[0, 0], 1);
        assert_eq!(fda_scatter(&s).unwrap().between[(0, 0)], 0.0);
    }

    #[test]
    fn fda_scatter_rejects_unequal_class_sizes() {
        let s = one_d(&[0.0, 2.0, 4.0], &[0, 0, 1], 2);
        assert!(matches!(
            fda_scatter(&s),
            Err(Error::UnequalClassSizes { .. })
        ));
    }

    #[test]
    fn pairwise_scatter_constant_is_kc() {
        // Enumerating ordered same-class pairs of the worked set: each class
        // contributes (1/2)(1/2)(4 + 4) = 2, so within = 4 = kC times the
        // moment-form value 1. The same constant holds for between.
        let s = worked_set();
        let pw = pairwise_scatter(&s).unwrap();
        let moment = fda_scatter(&s).unwrap();
        let kc = 4.0;
        assert!((pw.within[(0, 0)] - kc * moment.within[(0, 0)]).abs() < 1e-12);
        assert!((pw.between[(0, 0)] - kc * moment.between[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn pairwise_scatter_degenerate_cases() {
        let s = one_d(&[2.0, 2.0], &[0, 0], 1);
        assert_eq!(pairwise_scatter(&s).unwrap().within[(0, 0)], 0.0);
        // One point per class: no same-class pairs.
        let s = one_d(&[0.0, 3.0], &[0, 1], 2);
        let p = pairwise_scatter(&s).unwrap();
        assert_eq!(p.within[(0, 0)], 0.0);
        assert!(p.between[(0, 0)] > 0.0);
    }

    #[test]
    fn law_of_total_variance() {
        let s = LabeledSet::new(
            vec![
                vec![0.0, 1.0],
                vec![2.0, -1.0],
                vec![4.0, 3.0],
                vec![6.0, 5.0],
            ],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let p = fda_scatter(&s).unwrap();
        // Total scatter about the global mean equals within + between when
        // class sizes are equal.
        let (_, mu) = class_means(&s);
        let mut total = Matrix::zeros(2, 2);
        for pt in s.points() {
            add_outer(&mut total, &vec_sub(pt, &mu), 0.25);
        }
        let sum = p.within.add(&p.between);
        assert!(total.sub(&sum).frob_norm() <= 1e-10 * total.frob_norm());
    }

    #[test]
    fn affinity_kernel_values() {
        let s = one_d(&[0.0, 1.0], &[0, 1], 2);
        let a = affinity(&s, 1.0).unwrap();
        assert_eq!(a.entries()[(0, 0)], 1.0);
        assert!((a.entries()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-12);
        // Large separation drives the kernel toward zero.
        let far = one_d(&[0.0, 50.0], &[0, 1], 2);
        let a = affinity(&far, 1.0).unwrap();
        assert!(a.entries()[(0, 1)] < 1e-300);
        assert!(affinity(&s, 0.0).is_err());
    }

    #[test]
    fn lfda_all_ones_equals_pairwise() {
        let s = LabeledSet::new(
            vec![
                vec![0.0, 0.5],
                vec![2.0, -0.5],
                vec![4.0, 1.0],
                vec![6.0, 2.0],
            ],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let l = lfda_scatter(&s, &AffinityMatrix::ones(4)).unwrap();
        let p = pairwise_scatter(&s).unwrap();
        assert!(l.within.sub(&p.within).frob_norm() < 1e-12);
        assert!(l.between.sub(&p.between).frob_norm() < 1e-12);
    }

    #[test]
    fn lfda_suppresses_cross_cluster_terms() {
        // Class 0 has clusters at 0 and 100. Every cross-cluster affinity
        // underflows, so local within reduces to the per-cluster sum.
        let pts = [0.0, 1.0, 100.0, 101.0, 50.0, 51.0, 52.0, 53.0];
        let s = one_d(&pts, &[0, 0, 0, 0, 1, 1, 1, 1], 2);
        let a = affinity(&s, 1.0).unwrap();
        let l = lfda_scatter(&s, &a).unwrap();

        // Direct enumeration over same-class pairs closer than the cluster
        // gap; the excluded cross-cluster contribution is below 1e-40.
        let mut expected = 0.0;
        let mut cross_cluster = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if i == j || (i < 4) != (j < 4) {
                    continue;
                }
                let d: f64 = pts[i] - pts[j];
                let term = 0.5 * (-d * d).exp() / 4.0 * d * d;
                if d.abs() < 10.0 {
                    expected += term;
                } else {
                    cross_cluster += term;
                }
            }
        }
        assert!(cross_cluster < 1e-40);
        assert!((l.within[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn lfda_dimension_mismatch() {
        let s = worked_set();
        assert!(matches!(
            lfda_scatter(&s, &AffinityMatrix::ones(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scatter_outputs_are_psd() {
        let s = LabeledSet::new(
            vec![
                vec![0.3, -1.2, 0.4],
                vec![1.1, 0.2, -0.7],
                vec![-0.5, 2.2, 1.3],
                vec![2.0, 1.0, 0.0],
                vec![0.9, -0.4, 2.1],
                vec![1.4, 1.7, -1.1],
            ],
            vec![0, 0, 1, 1, 2, 2],
            3,
        )
        .unwrap();
        let a = affinity(&s, 4.0).unwrap();
        for pair in [
            fda_scatter(&s).unwrap(),
            pairwise_scatter(&s).unwrap(),
            lfda_scatter(&s, &a).unwrap(),
        ] {
            for m in [&pair.within, &pair.between] {
                let eig = crate::linalg::sym_eig(m).unwrap();
                assert!(*eig.eigenvalues.last().unwrap() >= -1e-8);
            }
        }
    }

    #[test]
    fn projected_covariances_identity_and_zero() {
        let s = worked_set();
        let f = identity_projection::<f64>(1);
        let (between, per_class) = projected_covariances(&s, &f).unwrap();
        let moment = fda_scatter(&s).unwrap();
        assert!((between[(0, 0)] - moment.between[(0, 0)]).abs() < 1e-12);
        assert!((per_class[0][(0, 0)] - 1.0).abs() < 1e-12);

        let zero = Projection::from_matrix(Matrix::zeros(1, 1), crate::projection::Extractor::Identity);
        let (b0, pc0) = projected_covariances(&s, &zero).unwrap();
        assert_eq!(b0[(0, 0)], 0.0);
        assert_eq!(pc0[0][(0, 0)], 0.0);
    }

    #[test]
    fn projected_covariances_scaling() {
        // F = 2I in 1D quadruples both covariances.
        let s = worked_set();
        let f = Projection::from_matrix(
            Matrix::from_rows(&[vec![2.0]]),
            crate::projection::Extractor::Identity,
        );
        let (between, per_class) = projected_covariances(&s, &f).unwrap();
        assert!((between[(0, 0)] - 16.0).abs() < 1e-12);
        assert!((per_class[0][(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn projected_covariances_conjugation_identity() {
        // Projected covariance equals M * (unprojected) * M^T for the
        // effective map M.
        let s = LabeledSet::new(
            vec![
                vec![0.0, 1.0],
                vec![2.0, -1.0],
                vec![4.0, 3.0],
                vec![6.0, 5.0],
            ],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let f = Projection::from_matrix(
            Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 1.2]]),
            crate::projection::Extractor::Identity,
        );
        let (between, per_class) = projected_covariances(&s, &f).unwrap();
        let moment = fda_scatter(&s).unwrap();
        let m = f.matrix().transpose();
        let conj = |x: &Matrix<f64>| m.matmul(x).matmul(&m.transpose());
        assert!(between.sub(&conj(&moment.between)).frob_norm() <= 1e-10 * (1.0 + between.frob_norm()));

        // Per-class within: recompute unprojected class-0 covariance.
        let idx = s.class_indices(0);
        let mu0 = mean_of(s.points(), &idx, 2);
        let mut cov0 = Matrix::zeros(2, 2);
        for &i in &idx {
            add_outer(&mut cov0, &vec_sub(&s.points()[i], &mu0), 0.5);
        }
        assert!(per_class[0].sub(&conj(&cov0)).frob_norm() <= 1e-10 * (1.0 + per_class[0].frob_norm()));
    }
}
