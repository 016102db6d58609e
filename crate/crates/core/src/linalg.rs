//! Sparse matrices, SPD solvers and a few spectral estimates.

use std::fmt;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HviError, Result};

/// Compressed sparse row matrix.
#[derive(Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl fmt::Debug for CsrMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CsrMatrix({}x{}, nnz={})", self.nrows, self.ncols, self.nnz())
    }
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_unstable_by_key(|e| e.0);
            let mut p = 0;
            while p < row.len() {
                let j = row[p].0;
                let mut v = 0.0;
                while p < row.len() && row[p].0 == j {
                    v += row[p].1;
                    p += 1;
                }
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t)
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

    /// Entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum::<f64>()),
        )
    }

    /// `y += alpha * A x`
    pub fn mul_vec_acc(&self, alpha: f64, x: &DVector<f64>, y: &mut DVector<f64>) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let s: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            y[i] += alpha * s;
        }
    }

    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows, "tr_mul_vec dimension");
        let mut y = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + alpha * other` on the union sparsity pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Linear combination `sum_k coeffs[k] * mats[k]`, all with the same shape.
    pub fn combination(nrows: usize, ncols: usize, terms: &[(f64, &CsrMatrix)]) -> Self {
        let mut t = Vec::new();
        for (c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            if *c != 0.0 {
                t.extend(m.triplets().map(|(i, j, v)| (i, j, c * v)));
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension");
        let mut t = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                t.push((i, j, acc[j]));
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.nrows == self.ncols
            && self
                .triplets()
                .all(|(i, j, v)| if i == j { v == 1.0 } else { v == 0.0 })
            && (0..self.nrows).all(|i| self.get(i, i) == 1.0)
    }

    /// `max |a_ij - a_ji| / max |a_ij|` (0 for the zero matrix).
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let diff = self.add_scaled(-1.0, &self.transpose());
        diff.max_abs() / scale
    }

    pub fn symmetric_part(&self) -> Self {
        self.add_scaled(1.0, &self.transpose()).scaled(0.5)
    }

    pub fn skew_part(&self) -> Self {
        self.add_scaled(-1.0, &self.transpose()).scaled(0.5)
    }

    /// True when no column index appears in two different rows.
    pub fn rows_have_disjoint_support(&self) -> bool {
        let mut owner = vec![usize::MAX; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if v == 0.0 {
                    continue;
                }
                if owner[j] != usize::MAX && owner[j] != i {
                    return false;
                }
                owner[j] = i;
            }
        }
        true
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// Which factorization backs an [`SpdSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolverKind {
    /// Dense Cholesky below [`DENSE_LIMIT`] unknowns, sparse Cholesky above.
    #[default]
    Auto,
    Dense,
    SparseDirect,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg {
        rel_tol: f64,
        max_iter: usize,
    },
}

pub const DENSE_LIMIT: usize = 2000;

enum Backend {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sparse(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Pcg {
        matrix: CsrMatrix,
        inv_diag: Vec<f64>,
        rel_tol: f64,
        max_iter: usize,
    },
}

/// Factorized symmetric positive definite matrix.
pub struct SpdSolver {
    n: usize,
    backend: Backend,
}

impl fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.backend {
            Backend::Dense(_) => "dense",
            Backend::Sparse(_) => "sparse",
            Backend::Pcg { .. } => "pcg",
        };
        write!(f, "SpdSolver({kind}, n={})", self.n)
    }
}

impl SpdSolver {
    pub fn new(matrix: &CsrMatrix, kind: LinearSolverKind) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(HviError::DimensionMismatch {
                context: "SPD factorization".into(),
                expected: n,
                actual: matrix.ncols(),
            });
        }
        let kind = match kind {
            LinearSolverKind::Auto if n < DENSE_LIMIT => LinearSolverKind::Dense,
            LinearSolverKind::Auto => LinearSolverKind::SparseDirect,
            k => k,
        };
        let backend = match kind {
            LinearSolverKind::Dense | LinearSolverKind::Auto => {
                let chol = nalgebra::Cholesky::new(matrix.to_dense()).ok_or_else(|| {
                    HviError::LinearSolver("dense Cholesky: matrix not positive definite".into())
                })?;
                Backend::Dense(chol)
            }
            LinearSolverKind::SparseDirect => {
                if n == 0 {
                    return Err(HviError::LinearSolver("empty matrix".into()));
                }
                let trip: Vec<_> = matrix.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
                let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
                    .map_err(|e| HviError::LinearSolver(format!("{e:?}")))?;
                let llt = a
                    .sp_cholesky(Side::Lower)
                    .map_err(|e| HviError::LinearSolver(format!("sparse Cholesky failed: {e:?}")))?;
                Backend::Sparse(llt)
            }
            LinearSolverKind::Pcg { rel_tol, max_iter } => {
                let diag = matrix.diagonal_entries();
                if diag.iter().any(|d| *d <= 0.0) {
                    return Err(HviError::LinearSolver("PCG: nonpositive diagonal entry".into()));
                }
                Backend::Pcg {
                    matrix: matrix.clone(),
                    inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                    rel_tol,
                    max_iter,
                }
            }
        };
        Ok(Self { n, backend })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n, "solve dimension");
        match &self.backend {
            Backend::Dense(c) => c.solve(b),
            Backend::Sparse(llt) => {
                let rhs = faer::Col::<f64>::from_fn(self.n, |i| b[i]);
                let x = llt.solve(&rhs);
                DVector::from_iterator(self.n, (0..self.n).map(|i| x[i]))
            }
            Backend::Pcg {
                matrix,
                inv_diag,
                rel_tol,
                max_iter,
            } => pcg(matrix, inv_diag, b, *rel_tol, *max_iter).0,
        }
    }

    /// Solves for every column of `b`.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n);
        match &self.backend {
            Backend::Dense(c) => c.solve(b),
            Backend::Sparse(llt) => {
                let rhs = faer::Mat::<f64>::from_fn(self.n, b.ncols(), |i, j| b[(i, j)]);
                let x = llt.solve(&rhs);
                DMatrix::from_fn(self.n, b.ncols(), |i, j| x[(i, j)])
            }
            Backend::Pcg { .. } => {
                let mut out = DMatrix::zeros(self.n, b.ncols());
                for j in 0..b.ncols() {
                    out.set_column(j, &self.solve(&b.column(j).into_owned()));
                }
                out
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the iterate and the
/// number of iterations used.
pub fn pcg(
    a: &CsrMatrix,
    inv_diag: &[f64],
    b: &DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> (DVector<f64>, usize) {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return (x, 0);
    }
    let mut r = b.clone();
    let mut z = DVector::from_iterator(n, r.iter().zip(inv_diag).map(|(r, d)| r * d));
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= rel_tol * bnorm {
            return (x, it + 1);
        }
        z = DVector::from_iterator(n, r.iter().zip(inv_diag).map(|(r, d)| r * d));
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
    }
    (x, max_iter)
}

/// Inner product defining the norm of the state space.
///
/// `Euclidean` is the coordinate inner product; `Matrix` carries an SPD Gram
/// matrix (for finite elements, the strain energy product).
#[derive(Clone, Debug)]
pub enum Gram {
    Euclidean,
    Matrix {
        matrix: Arc<CsrMatrix>,
        solver: Arc<SpdSolver>,
    },
}

impl Gram {
    pub fn from_matrix(matrix: CsrMatrix) -> Result<Self> {
        let solver = SpdSolver::new(&matrix, LinearSolverKind::Auto)?;
        Ok(Gram::Matrix {
            matrix: Arc::new(matrix),
            solver: Arc::new(solver),
        })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Euclidean => v.clone(),
            Gram::Matrix { matrix, .. } => matrix.mul_vec(v),
        }
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Euclidean => v.clone(),
            Gram::Matrix { solver, .. } => solver.solve(v),
        }
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match self {
            Gram::Euclidean => u.dot(v),
            Gram::Matrix { matrix, .. } => u.dot(&matrix.mul_vec(v)),
        }
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Dual norm `sqrt(g^T G^{-1} g)`.
    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        g.dot(&self.solve(g)).max(0.0).sqrt()
    }
}

/// Largest eigenvalue of the pencil `(A, G)` with `A` symmetric positive
/// semidefinite, by power iteration on `G^{-1} A`.
pub fn power_iteration(
    apply_a: impl Fn(&DVector<f64>) -> DVector<f64>,
    gram: &Gram,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    let nx = gram.norm(&x);
    x /= nx;
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let ax = apply_a(&x);
        let rq = x.dot(&ax);
        let y = gram.solve(&ax);
        let ny = gram.norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        x = y / ny;
        if (rq - lambda).abs() <= tol * rq.abs().max(f64::MIN_POSITIVE) {
            return rq.max(lambda);
        }
        lambda = rq;
    }
    lambda
}

/// Certified lower bound on the smallest eigenvalue of a symmetric matrix
/// (Euclidean Rayleigh quotients).
pub fn estimate_coercivity(matrix: &CsrMatrix) -> Result<f64> {
    estimate_coercivity_in(matrix, &Gram::Euclidean)
}

pub const COERCIVITY_TOL: f64 = 1e-12;

/// Certified lower bound on `min v^T A v / v^T G v`.
///
/// Inverse iteration yields a Rayleigh quotient `rho` and a residual whose
/// `G^{-1}`-norm `eta` brackets an eigenvalue in `[rho - eta, rho + eta]`;
/// a Cholesky factorization of `A - (rho - eta) G` then certifies that no
/// eigenvalue lies below the bracket.
pub fn estimate_coercivity_in(matrix: &CsrMatrix, gram: &Gram) -> Result<f64> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(HviError::InvalidArgument(
            "coercivity needs a nonempty square matrix".into(),
        ));
    }
    let asym = matrix.asymmetry();
    if asym > 1e-12 {
        return Err(HviError::NotSymmetric { asymmetry: asym });
    }
    let non_coercive = |estimate: f64| HviError::NonCoercive {
        estimate,
        tolerance: COERCIVITY_TOL,
    };
    let solver = SpdSolver::new(matrix, LinearSolverKind::Auto).map_err(|_| non_coercive(0.0))?;

    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 13) as f64));
    x /= gram.norm(&x);
    let mut rho = f64::INFINITY;
    let mut eta = f64::INFINITY;
    for it in 0..5000 {
        let previous = eta;
        let y = solver.solve(&gram.apply(&x));
        let ny = gram.norm(&y);
        x = y / ny;
        let ax = matrix.mul_vec(&x);
        rho = x.dot(&ax);
        let r = ax - rho * gram.apply(&x);
        eta = gram.dual_norm(&r);
        if eta <= 1e-15 * rho.abs().max(1e-300) || (it > 50 && eta > 0.9999 * previous) {
            break;
        }
    }
    let mut bound = rho - eta;
    // Shifted factorizations certify the bound; back off if one fails.
    for _ in 0..60 {
        if bound <= COERCIVITY_TOL {
            return Err(non_coercive(bound));
        }
        let shift = bound * (1.0 - 1e-12);
        let shifted = match gram {
            Gram::Euclidean => matrix.add_scaled(-shift, &CsrMatrix::identity(n)),
            Gram::Matrix { matrix: g, .. } => matrix.add_scaled(-shift, g),
        };
        if SpdSolver::new(&shifted, LinearSolverKind::Auto).is_ok() {
            return Ok(bound);
        }
        bound *= 0.5;
    }
    Err(non_coercive(bound))
}

/// Operator norm of a symmetric positive semidefinite matrix in the `G` norm.
pub fn operator_bound(matrix: &CsrMatrix, gram: &Gram) -> f64 {
    power_iteration(|v| matrix.mul_vec(v), gram, matrix.nrows(), 1e-10, 5000)
}
