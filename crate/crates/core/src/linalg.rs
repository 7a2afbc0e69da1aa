//! Compressed sparse rows, small dense matrices, Jacobi-preconditioned
//! conjugate gradients and a dense Cholesky fallback.
//!
//! All reductions run sequentially in index order so repeated runs produce
//! identical bits.

use std::ops::{Index, IndexMut};
use std::time::{Duration, Instant};

use crate::error::SolveError;
use crate::scalar::Real;

/// Sparse matrix in compressed row storage with sorted, unique column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// sorted order, independent of the input order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())).collect())
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|i| vals[i]).unwrap_or_else(|_| T::zero())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>, SolveError> {
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[T], y: &mut [T]) -> Result<(), SolveError> {
        if x.len() != self.ncols || y.len() != self.nrows {
            return Err(SolveError::DimensionMismatch {
                rows: self.nrows,
                cols: self.ncols,
                len: if x.len() != self.ncols { x.len() } else { y.len() },
            });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            *out = acc;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut triplets = Vec::new();
        let mut acc = vec![T::zero(); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut pattern = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    if !touched[c] {
                        touched[c] = true;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                triplets.push((r, c, acc[c]));
                acc[c] = T::zero();
                touched[c] = false;
            }
            pattern.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, triplets)
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shapes differ");
        let triplets = self
            .triplets()
            .map(|(r, c, v)| (r, c, alpha * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Picks rows `rows` and columns `cols` (given as global indices, in that order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (j, &c) in cols.iter().enumerate() {
            col_map[c] = j;
        }
        let mut triplets = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if col_map[c] != usize::MAX {
                    triplets.push((i, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), triplets)
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij - A_ji|`; infinite for non-square matrices.
    pub fn symmetry_defect(&self) -> T {
        if self.nrows != self.ncols {
            return T::infinity();
        }
        self.triplets().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(T::zero(), T::max)
    }

    /// `(A + A^T) / 2`, exactly symmetric.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        self.add_scaled(half, &self.transpose(), half)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_defect() == T::zero()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }
}

/// Row-major dense matrix for element-level work.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "vector length differs from column count");
        (0..self.rows).map(|r| (0..self.cols).map(|c| self[(r, c)] * x[c]).sum()).collect()
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shapes differ");
        Self::from_fn(self.rows, self.cols, |r, c| alpha * self[(r, c)] + beta * other[(r, c)])
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| alpha * self[(r, c)])
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }

    /// Cholesky factor `L` with `A = L L^T`.
    pub fn cholesky(&self) -> Result<Cholesky<T>, SolveError> {
        assert_eq!(self.rows, self.cols, "Cholesky needs a square matrix");
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(SolveError::NotPositiveDefinite { pivot: j, value: d.as_f64() });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = self.l[(k, i)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().map(|v| v.abs()).fold(T::zero(), T::max)
}

/// Outcome of a linear solve. `residual` is `||b - A x|| / ||b||` recomputed
/// from the returned iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Dense Cholesky; only sensible for small systems.
    DenseCholesky,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { kind: SolverKind::Cg, tol: 1e-12, max_iter: 10_000 }
    }
}

fn residual<T: Real>(a: &SparseMatrix<T>, b: &[T], x: &[T]) -> Result<Vec<T>, SolveError> {
    let ax = a.spmv(x)?;
    Ok(b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect())
}

/// Solves `A x = b` for symmetric positive definite `A` with Jacobi-preconditioned CG.
pub fn cg_solve<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<T>, SolveReport), SolveError> {
    cg_solve_from(a, b, vec![T::zero(); b.len()], tol, max_iter)
}

/// As [`cg_solve`], starting from `x0`.
pub fn cg_solve_from<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    x0: Vec<T>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<T>, SolveReport), SolveError> {
    let start = Instant::now();
    let n = b.len();
    if a.nrows() != n || a.ncols() != n || x0.len() != n {
        return Err(SolveError::DimensionMismatch { rows: a.nrows(), cols: a.ncols(), len: n });
    }
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        let report = SolveReport { iterations: 0, residual: 0.0, wall_time: start.elapsed() };
        return Ok((vec![T::zero(); n], report));
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > T::zero())) {
        return Err(SolveError::Indefinite { iteration: 0, curvature: diag[i].as_f64() });
    }
    let inv_diag: Vec<T> = diag.iter().map(|&d| T::one() / d).collect();
    let target = T::lit(tol) * bnorm;

    let mut x = x0;
    let mut iterations = 0;
    let mut ap = vec![T::zero(); n];
    let mut last_res = T::infinity();
    // outer loop restarts from the true residual until it meets the tolerance
    loop {
        let mut r = residual(a, b, &x)?;
        let true_res = norm2(&r);
        if true_res <= target {
            let report = SolveReport { iterations, residual: (true_res / bnorm).as_f64(), wall_time: start.elapsed() };
            return Ok((x, report));
        }
        if iterations >= max_iter || true_res >= last_res {
            return Err(SolveError::NotConverged { iterations, residual: (true_res / bnorm).as_f64() });
        }
        last_res = true_res;
        let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let rz0 = rz;
        // aim a bit below the target so the recomputed residual usually passes first time
        let inner_target = target * T::lit(0.5);
        while iterations < max_iter {
            a.spmv_into(&p, &mut ap)?;
            let curvature = dot(&p, &ap);
            // a vanishing recurrence residual (p'Ap underflows) hands back to the true residual
            if curvature == T::zero() && rz <= rz0 * T::epsilon() * T::epsilon() {
                break;
            }
            if !(curvature > T::zero()) {
                return Err(SolveError::Indefinite { iteration: iterations, curvature: curvature.as_f64() });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm2(&r) <= inner_target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Dense Cholesky solve of a sparse SPD system.
pub fn dense_solve<T: Real>(a: &SparseMatrix<T>, b: &[T]) -> Result<(Vec<T>, SolveReport), SolveError> {
    let start = Instant::now();
    if a.nrows() != b.len() || a.ncols() != b.len() {
        return Err(SolveError::DimensionMismatch { rows: a.nrows(), cols: a.ncols(), len: b.len() });
    }
    let x = a.to_dense().cholesky()?.solve(b);
    let bnorm = norm2(b);
    let res = if bnorm == T::zero() { T::zero() } else { norm2(&residual(a, b, &x)?) / bnorm };
    Ok((x, SolveReport { iterations: 0, residual: res.as_f64(), wall_time: start.elapsed() }))
}

/// Dispatches on [`SolverConfig::kind`]; `x0` is only used by CG.
pub fn solve_spd<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    x0: Option<Vec<T>>,
    cfg: &SolverConfig,
) -> Result<(Vec<T>, SolveReport), SolveError> {
    match cfg.kind {
        SolverKind::Cg => {
            let x0 = x0.unwrap_or_else(|| vec![T::zero(); b.len()]);
            cg_solve_from(a, b, x0, cfg.tol, cfg.max_iter)
        }
        SolverKind::DenseCholesky => dense_solve(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (1, 2, -1.0), (2, 1, -1.0)],
        )
    }

    #[test]
    fn spmv_cases() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(SparseMatrix::identity(3).spmv(&x).unwrap(), x.to_vec());
        assert_eq!(SparseMatrix::<f64>::zeros(3, 3).spmv(&x).unwrap(), vec![0.0; 3]);
        // dense oracle
        let a = sample();
        let d = [[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let want: Vec<f64> = d.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        assert_eq!(a.spmv(&x).unwrap(), want);
        assert!(matches!(a.spmv(&[1.0]), Err(SolveError::DimensionMismatch { .. })));
    }

    #[test]
    fn duplicates_sum_regardless_of_order() {
        let t1 = vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5), (0, 1, 3.0)];
        let mut t2 = t1.clone();
        t2.reverse();
        let a = SparseMatrix::from_triplets(2, 2, t1);
        assert_eq!(a, SparseMatrix::from_triplets(2, 2, t2));
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn products_and_transpose() {
        let c = SparseMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let ctc = c.transpose().matmul(&c).to_dense();
        let want = c.to_dense().transpose().matmul(&c.to_dense());
        assert_eq!(ctc, want);
        assert!(c.transpose().matmul(&c).is_symmetric());
        let s = sample().submatrix(&[2, 0], &[0, 2]);
        assert_eq!(s.to_dense(), DenseMatrix::from_fn(2, 2, |r, c| [[0.0, 2.0], [4.0, 0.0]][r][c]));
    }

    #[test]
    fn cg_identity_one_iteration() {
        let b = vec![1.0, -3.0, 2.5, 0.25];
        let (x, rep) = cg_solve(&SparseMatrix::identity(4), &b, 1e-12, 10).unwrap();
        assert_eq!(x, b);
        assert!(rep.iterations <= 1);
    }

    #[test]
    fn cg_diagonal_terminates() {
        let n = 20;
        let diag: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let a = SparseMatrix::from_diagonal(&diag);
        let b = vec![1.0; n];
        let (x, rep) = cg_solve(&a, &b, 1e-12, n).unwrap();
        assert!(rep.iterations <= n);
        for i in 0..n {
            assert!((x[i] - 1.0 / diag[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cg_on_laplacian_matches_dense() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let (x, rep) = cg_solve(&a, &b, 1e-12, 1000).unwrap();
        assert!(rep.residual <= 1e-12);
        let (xd, _) = dense_solve(&a, &b).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_rejects_indefinite() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(cg_solve(&a, &[1.0, -1.0], 1e-12, 10), Err(SolveError::Indefinite { .. })));
        assert!(a.to_dense().cholesky().is_err());
    }

    #[test]
    fn cg_reports_non_convergence() {
        let diag: Vec<f64> = (1..=50).map(|i| (i * i) as f64).collect();
        let a = SparseMatrix::from_triplets(
            50,
            50,
            (0..50)
                .flat_map(|i| {
                    let mut v = vec![(i, i, diag[i])];
                    if i + 1 < 50 {
                        v.push((i, i + 1, -0.4 * diag[i].min(diag[i + 1])));
                        v.push((i + 1, i, -0.4 * diag[i].min(diag[i + 1])));
                    }
                    v
                })
                .collect(),
        );
        let b = vec![1.0; 50];
        assert!(matches!(cg_solve(&a, &b, 1e-14, 2), Err(SolveError::NotConverged { .. })));
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = sample().to_dense();
        let b = [1.0, 2.0, 3.0];
        let x = a.cholesky().unwrap().solve(&b);
        let back = a.mul_vec(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-14);
        }
    }
}
