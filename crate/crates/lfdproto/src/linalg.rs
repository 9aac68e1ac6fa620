//! Dense symmetric linear algebra: Jacobi eigendecomposition, Cholesky,
//! and the symmetric-definite generalized eigenproblem behind every
//! trace-ratio objective in this crate.
//!
//! Everything here is dense and single-threaded; problem sizes are at most
//! a few hundred. Eigenvalues are always returned in descending order and
//! eigenvector signs are fixed so the first non-negligible component is
//! positive, which keeps downstream results deterministic.

use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};

/// Relative asymmetry tolerated before an input is rejected.
pub(crate) const SYMMETRY_TOL: f64 = 1e-10;

/// Ridge factor applied to a denominator matrix when plain Cholesky or
/// inversion fails: `1e-6 * trace / dim` is added to the diagonal.
pub const RIDGE_EPS: f64 = 1e-6;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    /// Diagonal square matrix from the given entries.
    pub fn diag(entries: &[T]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    /// `self * v` for a column vector.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// Adds `s` to every diagonal entry (in place ridge).
    pub fn add_diag(&self, s: T) -> Matrix<T> {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += s;
        }
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Maximum absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Symmetrized copy `(A + A^T)/2`.
    pub fn symmetrize(&self) -> Matrix<T> {
        assert!(self.is_square());
        let half = T::real(0.5);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Full spectrum of a symmetric matrix, eigenvalues descending, eigenvector
/// columns orthonormal and sign-normalized.
#[derive(Debug, Clone)]
pub struct SymEigResult<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Matrix<T>,
}

/// Solution of `A v = lambda B v` for symmetric `A` and positive-definite
/// `B`; eigenvector columns are B-orthonormal. `whitener` is the lower
/// Cholesky factor of (possibly ridged) `B` used in the reduction.
#[derive(Debug, Clone)]
pub struct GenEigResult<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Matrix<T>,
    pub whitener: Matrix<T>,
}

fn check_symmetric_input<T: Real>(a: &Matrix<T>) -> Result<()> {
    if !a.all_finite() {
        return Err(Error::NotFinite);
    }
    if !a.is_square() {
        return Err(Error::dim(format!(
            "expected square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs();
    let asym = a.asymmetry();
    if asym > T::real(SYMMETRY_TOL) * scale.max(T::one()) {
        return Err(Error::NotSymmetric {
            asymmetry: asym.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Flips each column so its first non-negligible component is positive.
fn fix_signs<T: Real>(v: &mut Matrix<T>) {
    let n = v.rows();
    for j in 0..v.cols() {
        let col_max = (0..n).fold(T::zero(), |m, i| m.max(v[(i, j)].abs()));
        if col_max == T::zero() {
            continue;
        }
        let thresh = T::real(1e-9) * col_max;
        for i in 0..n {
            let x = v[(i, j)];
            if x.abs() > thresh {
                if x < T::zero() {
                    for r in 0..n {
                        v[(r, j)] = -v[(r, j)];
                    }
                }
                break;
            }
        }
    }
}

/// Sorts eigenpairs descending by eigenvalue and applies the sign convention.
fn sort_pairs<T: Real>(eigenvalues: Vec<T>, vectors: Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps tie order deterministic.
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .partial_cmp(&eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted_vals: Vec<T> = order.iter().map(|&i| eigenvalues[i]).collect();
    let mut sorted_vecs = Matrix::zeros(vectors.rows(), n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..vectors.rows() {
            sorted_vecs[(r, dst)] = vectors[(r, src)];
        }
    }
    fix_signs(&mut sorted_vecs);
    (sorted_vals, sorted_vecs)
}

/// Full eigendecomposition of a symmetric matrix by the cyclic Jacobi
/// method.
///
/// Rotations are applied in sweeps until the off-diagonal mass is at
/// machine-level relative to the matrix scale. Jacobi is unconditionally
/// stable for symmetric input and the sizes here never exceed a few
/// hundred.
pub fn sym_eig<T: Real>(a: &Matrix<T>) -> Result<SymEigResult<T>> {
    check_symmetric_input(a)?;
    let n = a.rows();
    if n > 4096 {
        return Err(Error::dim(format!("dimension {n} exceeds the 4096 cap")));
    }

    let mut m = a.symmetrize();
    let mut v = Matrix::<T>::identity(n);

    let off_norm = |m: &Matrix<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };

    let scale = m.frob_norm().max(T::min_positive_value());
    let tol = T::epsilon() * scale;
    let max_sweeps = 100;

    for _ in 0..max_sweeps {
        if off_norm(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::epsilon() * scale {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::real(2.0) * apq);
                // Smaller-angle root of t^2 + 2 t theta - 1 = 0.
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                // Update rows/columns p and q of the symmetric matrix.
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m[(i, p)];
                        let aiq = m[(i, q)];
                        let nip = c * aip - s * aiq;
                        let niq = s * aip + c * aiq;
                        m[(i, p)] = nip;
                        m[(p, i)] = nip;
                        m[(i, q)] = niq;
                        m[(q, i)] = niq;
                    }
                }
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();

                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let eigenvalues: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    let (eigenvalues, eigenvectors) = sort_pairs(eigenvalues, v);
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
///
/// Fails with `NotPositiveDefinite` on a non-positive pivot.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    check_symmetric_input(a)?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= T::zero() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Forward-substitution solve `L x = b` for lower-triangular `L`.
fn forward_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

/// Back-substitution solve `L^T x = b` for lower-triangular `L`.
fn backward_solve_t<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

fn cholesky_with_ridge<T: Real>(b: &Matrix<T>) -> Result<Matrix<T>> {
    match cholesky(b) {
        Ok(l) => Ok(l),
        Err(Error::NotPositiveDefinite) => {
            let n = T::from_usize(b.rows()).unwrap();
            let ridge = (T::real(RIDGE_EPS) * b.trace() / n).max(T::real(1e-12));
            cholesky(&b.add_diag(ridge))
        }
        Err(e) => Err(e),
    }
}

/// Solves the symmetric-definite generalized eigenproblem `A v = lambda B v`
/// by Cholesky whitening: with `B = L L^T`, the pairs are recovered from the
/// ordinary symmetric problem on `L^-1 A L^-T` and un-whitened through
/// `L^T`. Returned eigenvectors are B-orthonormal.
///
/// `B` is factored as given first; the diagonal ridge `1e-6 * tr(B)/dim` is
/// added only if that factorization fails, so well-conditioned inputs keep
/// residuals at the 1e-8 level of the contract.
pub fn solve_generalized_eig<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<GenEigResult<T>> {
    check_symmetric_input(a)?;
    check_symmetric_input(b)?;
    if a.rows() != b.rows() {
        return Err(Error::dim(format!(
            "A is {}x{} but B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = a.rows();
    let l = cholesky_with_ridge(b)?;

    // C = L^-1 A L^-T, assembled column by column.
    let mut w = Matrix::zeros(n, n);
    for j in 0..n {
        let col = forward_solve(&l, &a.column(j));
        for i in 0..n {
            w[(i, j)] = col[i];
        }
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        let row: Vec<T> = (0..n).map(|j| w[(i, j)]).collect();
        let solved = forward_solve(&l, &row);
        for j in 0..n {
            c[(i, j)] = solved[j];
        }
    }
    let c = c.symmetrize();

    let inner = sym_eig(&c)?;
    let mut vectors = Matrix::zeros(n, n);
    for j in 0..n {
        let col = backward_solve_t(&l, &inner.eigenvectors.column(j));
        for i in 0..n {
            vectors[(i, j)] = col[i];
        }
    }
    fix_signs(&mut vectors);

    Ok(GenEigResult {
        eigenvalues: inner.eigenvalues,
        eigenvectors: vectors,
        whitener: l,
    })
}

/// `Tr((w^T den w)^-1 (w^T num w))` for an m-by-n basis `w`.
///
/// If the projected denominator is singular, one ridge rescue is attempted
/// before failing with `SingularProjection`.
pub fn trace_ratio<T: Real>(w: &Matrix<T>, num: &Matrix<T>, den: &Matrix<T>) -> Result<T> {
    if w.rows() != num.rows() || w.rows() != den.rows() {
        return Err(Error::dim(format!(
            "basis has {} rows, scatter matrices are {}x{} and {}x{}",
            w.rows(),
            num.rows(),
            num.cols(),
            den.rows(),
            den.cols()
        )));
    }
    let wt = w.transpose();
    let p = wt.matmul(&den.matmul(w)).symmetrize();
    let q = wt.matmul(&num.matmul(w)).symmetrize();
    trace_of_solve(&p, &q)
}

/// `Tr(P^-1 Q)` through the spectrum of symmetric `P`, with one ridge
/// rescue on near-singular `P`.
pub fn trace_of_solve<T: Real>(p: &Matrix<T>, q: &Matrix<T>) -> Result<T> {
    let attempt = |p: &Matrix<T>| -> Option<T> {
        let eig = sym_eig(p).ok()?;
        let max = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |m, &x| m.max(x.abs()));
        if max == T::zero() {
            return None;
        }
        let cutoff = T::real(1e-12) * max;
        let mut total = T::zero();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() <= cutoff {
                return None;
            }
            let u = eig.eigenvectors.column(j);
            let qu = q.matvec(&u);
            let quad: T = u.iter().zip(&qu).map(|(&a, &b)| a * b).sum();
            total += quad / lambda;
        }
        Some(total)
    };

    if let Some(v) = attempt(p) {
        return Ok(v);
    }
    let n = T::from_usize(p.rows()).unwrap();
    let ridge = (T::real(RIDGE_EPS) * p.trace() / n).max(T::real(1e-12));
    attempt(&p.add_diag(ridge)).ok_or(Error::SingularProjection)
}

/// `Tr(A B)` without forming the product.
pub fn trace_product<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    if a.rows() != b.cols() || a.cols() != b.rows() {
        return Err(Error::dim(format!(
            "trace of a {}x{} by {}x{} product",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut total = T::zero();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            total += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(total)
}

/// A factor `L` with `L L^T = A` for symmetric PSD `A`.
///
/// Uses Cholesky when `A` is positive-definite and falls back to an
/// eigenvalue square root otherwise, so rank-deficient covariances
/// (including zero) factor exactly instead of needing a ridge.
pub fn psd_factor<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if let Ok(l) = cholesky(a) {
        return Ok(l);
    }
    let eig = sym_eig(a)?;
    let n = a.rows();
    let floor = -T::real(1e-8) * (T::one() + a.max_abs());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lambda = eig.eigenvalues[j];
        if lambda < floor {
            return Err(Error::NotPositiveDefinite);
        }
        let s = lambda.max(T::zero()).sqrt();
        for i in 0..n {
            l[(i, j)] = eig.eigenvectors[(i, j)] * s;
        }
    }
    Ok(l)
}
