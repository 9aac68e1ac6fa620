//! Feature projections built from a support set: identity (plain
//! prototype classification), Fisher discriminant directions, and local
//! Fisher discriminant directions in shared or per-class form.
//!
//! All extractors solve the generalized eigenproblem
//! `between v = lambda within v` and keep the leading eigenvectors, i.e.
//! they maximize between-class over within-class scatter. The per-class
//! variant pairs the class-mean covariance with each class's local within
//! scatter, which is the only non-circular reading of the per-class
//! objective (the projected covariances it nominally optimizes depend on
//! the projection being built; they are evaluated after the fact instead).

use crate::linalg::{solve_generalized_eig, Matrix};
use crate::scatter::{fda_scatter, lfda_scatter, AffinityMatrix, LabeledSet};
use crate::{Error, Real, Result};

/// Which extractor produced a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    Identity,
    Fda,
    Lfda,
}

/// Shared projection vs the per-class projection of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Shared,
    PerClass(usize),
}

/// An m-by-n feature projection. Columns are the projection directions;
/// applying the projection maps `x` to the vector of column dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    matrix: Matrix<T>,
    extractor: Extractor,
    mode: ProjectionMode,
    dim_requested: usize,
}

impl<T: Real> Projection<T> {
    pub fn from_matrix(matrix: Matrix<T>, extractor: Extractor) -> Self {
        let n = matrix.cols();
        Projection {
            matrix,
            extractor,
            mode: ProjectionMode::Shared,
            dim_requested: n,
        }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    /// Uniformly rescales the matrix so its Frobenius norm is
    /// `sqrt(output_dim)`, matching the identity projection's scale.
    ///
    /// A uniform rescale multiplies every projected distance by the same
    /// factor, so nearest-prototype decisions are unchanged; it only fixes
    /// the scale convention, which otherwise differs between extractors.
    pub fn normalized_scale(mut self) -> Self {
        let mut sq = T::zero();
        for v in self.matrix.data() {
            sq = sq + *v * *v;
        }
        let fro = sq.sqrt();
        if fro > T::zero() {
            let s = T::real(self.matrix.cols() as f64).sqrt() / fro;
            for v in self.matrix.data_mut() {
                *v = *v * s;
            }
        }
        self
    }

    pub fn extractor(&self) -> Extractor {
        self.extractor
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn dim_requested(&self) -> usize {
        self.dim_requested
    }

    /// Input (embedding) dimension m.
    pub fn input_dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Output (projected) dimension n.
    pub fn output_dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Projects `x`: component i is the dot product with column i.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "projection expects dimension {}, vector has {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok((0..self.output_dim())
            .map(|j| (0..self.input_dim()).map(|i| self.matrix[(i, j)] * x[i]).sum())
            .collect())
    }
}

/// The identity projection on `R^m`.
pub fn identity_projection<T: Real>(m: usize) -> Projection<T> {
    assert!(m >= 1);
    Projection {
        matrix: Matrix::identity(m),
        extractor: Extractor::Identity,
        mode: ProjectionMode::Shared,
        dim_requested: m,
    }
}

/// Keeps the top `n` generalized eigenvectors of `between v = lambda within v`.
///
/// `check_rank` additionally requires the kept eigenvalues to be
/// non-negligible relative to the leading one, rejecting directions the
/// between scatter cannot support.
fn top_directions<T: Real>(
    between: &Matrix<T>,
    within: &Matrix<T>,
    n: usize,
    check_rank: bool,
) -> Result<Matrix<T>> {
    let res = solve_generalized_eig(between, within)?;
    if check_rank {
        let lead = res.eigenvalues[0].max(T::zero());
        let cutoff = T::real(1e-9) * lead;
        let rank = res
            .eigenvalues
            .iter()
            .take_while(|&&l| l > cutoff && l > T::zero())
            .count();
        if rank < n {
            return Err(Error::RankDeficient { requested: n, rank });
        }
    }
    let m = between.rows();
    let mut w = Matrix::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            w[(i, j)] = res.eigenvectors[(i, j)];
        }
    }
    Ok(w)
}

/// Fisher discriminant projection onto `n <= C - 1` directions.
pub fn fda_projection<T: Real>(s: &LabeledSet<T>, n: usize) -> Result<Projection<T>> {
    let c = s.class_count();
    if n == 0 || n + 1 > c {
        return Err(Error::DimensionTooLarge {
            requested: n,
            available: c.saturating_sub(1),
        });
    }
    let pair = fda_scatter(s)?;
    let w = top_directions(&pair.between, &pair.within, n, true)?;
    Ok(Projection {
        matrix: w,
        extractor: Extractor::Fda,
        mode: ProjectionMode::Shared,
        dim_requested: n,
    })
}

/// Shared local Fisher discriminant projection onto `n <= kC - 1`
/// directions built from the affinity-weighted scatter pair.
pub fn lfda_projection_shared<T: Real>(
    s: &LabeledSet<T>,
    a: &AffinityMatrix<T>,
    n: usize,
) -> Result<Projection<T>> {
    let total = s.len();
    if n == 0 || n + 1 > total {
        return Err(Error::DimensionTooLarge {
            requested: n,
            available: total.saturating_sub(1),
        });
    }
    let pair = lfda_scatter(s, a)?;
    let w = top_directions(&pair.between, &pair.within, n, false)?;
    Ok(Projection {
        matrix: w,
        extractor: Extractor::Lfda,
        mode: ProjectionMode::Shared,
        dim_requested: n,
    })
}

/// Local within scatter restricted to one class:
/// `(1/2) sum_{i,j in c} (A_ij / k) (x_i - x_j)(x_i - x_j)^T`.
fn class_local_within<T: Real>(
    s: &LabeledSet<T>,
    a: &AffinityMatrix<T>,
    class: usize,
    k: usize,
) -> Matrix<T> {
    let m = s.dim();
    let mut within = Matrix::zeros(m, m);
    let idx = s.class_indices(class);
    let half_over_k = T::real(0.5) / T::from_usize(k).unwrap();
    for &i in &idx {
        for &j in &idx {
            if i == j {
                continue;
            }
            let weight = half_over_k * a.entries()[(i, j)];
            for r in 0..m {
                let d_r = s.points()[i][r] - s.points()[j][r];
                let w_r = weight * d_r;
                for ccol in 0..m {
                    within[(r, ccol)] += w_r * (s.points()[i][ccol] - s.points()[j][ccol]);
                }
            }
        }
    }
    within.symmetrize()
}

/// One local Fisher projection per class: the class-mean covariance is
/// paired with that class's local within scatter. No rank cutoff is
/// applied; trailing directions with vanishing between-energy are still
/// well-defined (within-orthonormal) and keep the `kC - 1` dimension
/// budget usable.
pub fn lfda_projection_per_class<T: Real>(
    s: &LabeledSet<T>,
    a: &AffinityMatrix<T>,
    n: usize,
) -> Result<Vec<Projection<T>>> {
    let total = s.len();
    if n == 0 || n + 1 > total {
        return Err(Error::DimensionTooLarge {
            requested: n,
            available: total.saturating_sub(1),
        });
    }
    if a.len() != s.len() {
        return Err(Error::dim(format!(
            "affinity is {}x{} but the set has {} points",
            a.len(),
            a.len(),
            s.len()
        )));
    }
    let k = s.uniform_class_size()?;
    let between = fda_scatter(s)?.between;
    (0..s.class_count())
        .map(|c| {
            let within = class_local_within(s, a, c, k);
            let w = top_directions(&between, &within, n, false)?;
            Ok(Projection {
                matrix: w,
                extractor: Extractor::Lfda,
                mode: ProjectionMode::PerClass(c),
                dim_requested: n,
            })
        })
        .collect()
}

/// A shared projection or one projection per class.
#[derive(Debug, Clone)]
pub enum Projections<T> {
    Shared(Projection<T>),
    PerClass(Vec<Projection<T>>),
}

impl<T: Real> Projections<T> {
    /// The projection used for class `c`.
    pub fn for_class(&self, c: usize) -> &Projection<T> {
        match self {
            Projections::Shared(p) => p,
            Projections::PerClass(ps) => &ps[c],
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Projections::Shared(p) => p.input_dim(),
            Projections::PerClass(ps) => ps[0].input_dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_ratio;
    use crate::scatter::{affinity, class_means};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_gaussians_2d(seed: u64, n_per_class: usize) -> LabeledSet<f64> {
        // Classes centered at (+-3, 0) with small variance on axis 0 and
        // large variance on axis 1.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            let cx = if c == 0 { -3.0 } else { 3.0 };
            for _ in 0..n_per_class {
                let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.1f64.sqrt() + cx;
                let y: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 10.0f64.sqrt();
                points.push(vec![x, y]);
                labels.push(c);
            }
        }
        LabeledSet::new(points, labels, 2).unwrap()
    }

    #[test]
    fn identity_projection_is_identity() {
        let f = identity_projection::<f64>(3);
        let x = vec![1.0, -2.0, 0.5];
        assert_eq!(f.project(&x).unwrap(), x);
        assert_eq!(f.output_dim(), 3);
    }

    #[test]
    fn fda_two_1d_classes() {
        let s = LabeledSet::new(
            vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let f = fda_projection(&s, 1).unwrap();
        // The only direction, sign-normalized.
        assert!(f.matrix()[(0, 0)] > 0.0);
    }

    #[test]
    fn fda_picks_separating_axis() {
        let s = two_gaussians_2d(7, 40);
        let f = fda_projection(&s, 1).unwrap();
        let col = f.matrix().column(0);
        let norm = (col[0] * col[0] + col[1] * col[1]).sqrt();
        assert!(
            (col[0] / norm).abs() > 0.99,
            "expected axis-0 direction, got {col:?}"
        );
    }

    #[test]
    fn fda_dimension_and_rank_errors() {
        let s = two_gaussians_2d(3, 10);
        assert!(matches!(
            fda_projection(&s, 2),
            Err(Error::DimensionTooLarge { .. })
        ));

        // Three exactly collinear class means in 2D: the within-class
        // jitter is symmetric, so the between scatter has rank 1.
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let jitter = [-0.01, -0.005, 0.0, 0.005, 0.01];
        for c in 0..3usize {
            for (i, &j) in jitter.iter().enumerate() {
                let flip = if i % 2 == 0 { 1.0 } else { -1.0 };
                points.push(vec![c as f64 + j, flip * j]);
                labels.push(c);
            }
        }
        let s = LabeledSet::new(points, labels, 3).unwrap();
        assert!(matches!(
            fda_projection(&s, 2),
            Err(Error::RankDeficient { requested: 2, .. })
        ));
        assert!(fda_projection(&s, 1).is_ok());
    }

    #[test]
    fn lfda_all_ones_spans_fda_subspace() {
        let s = two_gaussians_2d(11, 25);
        let n = 1;
        let fda = fda_projection(&s, n).unwrap();
        let lfda = lfda_projection_shared(&s, &AffinityMatrix::ones(s.len()), n).unwrap();
        // n = 1: principal angle via normalized dot product.
        let a = fda.matrix().column(0);
        let b = lfda.matrix().column(0);
        let dot: f64 = a.iter().zip(&b).map(|(&x, &y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dot.abs() / (na * nb) - 1.0).abs() < 1e-6);
    }

    /// The sandwiched-class construction: class 0 splits into two clusters
    /// at y = -6 and y = +6 with class 1 between them. FDA merges the
    /// clusters and picks a poor direction; local scatter keeps them apart.
    pub(crate) fn sandwiched_set(seed: u64, per_cluster: usize) -> LabeledSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let noise = |sx: f64, sy: f64, rng: &mut ChaCha8Rng| {
            let dx: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            let dy: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            (dx * sx, dy * sy)
        };
        for _ in 0..per_cluster {
            let (dx, dy) = noise(1.0, 0.4, &mut rng);
            points.push(vec![dx, 6.0 + dy]);
            labels.push(0);
            let (dx, dy) = noise(1.0, 0.4, &mut rng);
            points.push(vec![dx, -6.0 + dy]);
            labels.push(0);
            let (dx, dy) = noise(1.0, 0.4, &mut rng);
            points.push(vec![dx, dy]);
            labels.push(1);
            let (dx, dy) = noise(1.0, 0.4, &mut rng);
            points.push(vec![dx, dy]);
            labels.push(1);
        }
        LabeledSet::new(points, labels, 2).unwrap()
    }

    #[test]
    fn lfda_beats_fda_on_sandwiched_class() {
        let s = sandwiched_set(5, 10);
        let a = affinity(&s, 8.0).unwrap();
        let n = 1;
        let fda = fda_projection(&s, n).unwrap();
        let lfda = lfda_projection_shared(&s, &a, n).unwrap();
        let pair = lfda_scatter(&s, &a).unwrap();
        let ratio = |p: &Projection<f64>| {
            trace_ratio(p.matrix(), &pair.within, &pair.between).unwrap()
        };
        assert!(
            ratio(&lfda) < ratio(&fda),
            "LFDA ratio {} not below FDA ratio {}",
            ratio(&lfda),
            ratio(&fda)
        );
    }

    #[test]
    fn one_shot_five_way_dimension_budget() {
        // k = 1, C = 5: up to 4 projected features are available.
        let mut points = Vec::new();
        for c in 0..5usize {
            points.push(vec![c as f64, (c * c) as f64, 1.0 - c as f64, 0.3 * c as f64, 0.1]);
        }
        let s = LabeledSet::new(points, vec![0, 1, 2, 3, 4], 5).unwrap();
        let a = affinity(&s, 100.0).unwrap();
        assert!(lfda_projection_per_class(&s, &a, 4).is_ok());
        assert!(matches!(
            lfda_projection_per_class(&s, &a, 5),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn project_linearity_and_contraction() {
        let f = Projection::from_matrix(
            Matrix::from_rows(&[
                vec![std::f64::consts::FRAC_1_SQRT_2],
                vec![std::f64::consts::FRAC_1_SQRT_2],
            ]),
            Extractor::Identity,
        );
        let x = vec![1.0, 2.0];
        let y = vec![-0.5, 3.0];
        let lhs = f
            .project(&x.iter().zip(&y).map(|(&a, &b)| 2.0 * a - 0.7 * b).collect::<Vec<_>>())
            .unwrap();
        let px = f.project(&x).unwrap();
        let py = f.project(&y).unwrap();
        for i in 0..lhs.len() {
            assert!((lhs[i] - (2.0 * px[i] - 0.7 * py[i])).abs() < 1e-12);
        }
        // Orthonormal columns contract norms.
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let npx: f64 = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(npx <= nx + 1e-12);
    }

    #[test]
    fn mean_commutes_with_projection() {
        let s = two_gaussians_2d(17, 15);
        let f = fda_projection(&s, 1).unwrap();
        let (mu_c, _) = class_means(&s);
        for c in 0..2 {
            let projected_mean = f.project(&mu_c[c]).unwrap();
            let idx = s.class_indices(c);
            let mut mean_projected = vec![0.0; f.output_dim()];
            for &i in &idx {
                let p = f.project(&s.points()[i]).unwrap();
                for (acc, v) in mean_projected.iter_mut().zip(&p) {
                    *acc += v / idx.len() as f64;
                }
            }
            for (a, b) in projected_mean.iter().zip(&mean_projected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn returned_direction_beats_random_directions() {
        let s = two_gaussians_2d(23, 20);
        let pair = fda_scatter(&s).unwrap();
        let f = fda_projection(&s, 1).unwrap();
        let best = trace_ratio(f.matrix(), &pair.within, &pair.between).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let w = Matrix::from_rows(&[vec![theta.cos()], vec![theta.sin()]]);
            let r = trace_ratio(&w, &pair.within, &pair.between).unwrap();
            assert!(best <= r + 1e-9, "random direction beat the extractor");
        }
    }

    #[test]
    fn determinism() {
        let s = sandwiched_set(41, 8);
        let a = affinity(&s, 8.0).unwrap();
        let p1 = lfda_projection_per_class(&s, &a, 2).unwrap();
        let p2 = lfda_projection_per_class(&s, &a, 2).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            assert_eq!(x.matrix(), y.matrix());
        }
    }
}
