//! Sparse and dense linear-algebra plumbing shared by the assembly and
//! evolution modules.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub type SparseMatrix = CsrMatrix<f64>;

/// Accumulates `(row, col, value)` contributions; duplicates are summed on
/// conversion.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    /// Appends another batch, preserving order so that summation is
    /// reproducible.
    pub fn extend(&mut self, other: Triplets) {
        self.rows.extend(other.rows);
        self.cols.extend(other.cols);
        self.vals.extend(other.vals);
    }

    /// Converts to CSR. Duplicates are summed in insertion order, so a
    /// symmetric sequence of contributions yields an exactly symmetric matrix.
    pub fn to_csr(&self) -> SparseMatrix {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by_key(|&k| (self.rows[k], self.cols[k]));
        let mut offsets = vec![0usize; self.nrows + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(order.len());
        let mut vals: Vec<f64> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let key = (self.rows[k], self.cols[k]);
            if last == Some(key) {
                *vals.last_mut().unwrap() += self.vals[k];
            } else {
                cols.push(key.1);
                vals.push(self.vals[k]);
                offsets[key.0 + 1] += 1;
                last = Some(key);
            }
        }
        for r in 0..self.nrows {
            offsets[r + 1] += offsets[r];
        }
        CsrMatrix::try_from_csr_data(self.nrows, self.ncols, offsets, cols, vals).expect("valid csr layout")
    }
}

pub fn zeros(nrows: usize, ncols: usize) -> SparseMatrix {
    CsrMatrix::zeros(nrows, ncols)
}

pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len(), "matvec dimension mismatch");
    let mut y = vec![0.0; a.nrows()];
    for (i, row) in a.row_iter().enumerate() {
        let mut s = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            s += v * x[j];
        }
        y[i] = s;
    }
    y
}

/// `y = Aᵀ x`.
pub fn matvec_t(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), x.len(), "matvec_t dimension mismatch");
    let mut y = vec![0.0; a.ncols()];
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            y[j] += v * xi;
        }
    }
    y
}

/// `xᵀ A y`.
pub fn bilinear(a: &SparseMatrix, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &matvec(a, y))
}

pub fn quad(a: &SparseMatrix, x: &[f64]) -> f64 {
    bilinear(a, x, x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

/// Linear combination `Σ cᵢ Aᵢ` of matrices with identical shape.
pub fn combine(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
    let (nrows, ncols) = (terms[0].1.nrows(), terms[0].1.ncols());
    let mut t = Triplets::new(nrows, ncols);
    for (c, m) in terms {
        assert_eq!((m.nrows(), m.ncols()), (nrows, ncols), "combine shape mismatch");
        for (i, j, v) in m.triplet_iter() {
            t.push(i, j, c * v);
        }
    }
    t.to_csr()
}

/// Largest `|A_ij − A_ji|`.
pub fn max_asymmetry(a: &SparseMatrix) -> f64 {
    let at = a.transpose();
    let mut worst: f64 = 0.0;
    let diff = combine(&[(1.0, a), (-1.0, &at)]);
    for v in diff.values() {
        worst = worst.max(v.abs());
    }
    worst
}

/// Keeps the rows and columns listed (in that order).
pub fn submatrix(a: &SparseMatrix, rows: &[usize], cols: &[usize]) -> SparseMatrix {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (k, &c) in cols.iter().enumerate() {
        col_map[c] = k;
    }
    let mut t = Triplets::new(rows.len(), cols.len());
    for (ri, &r) in rows.iter().enumerate() {
        let row = a.row(r);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            let cj = col_map[j];
            if cj != usize::MAX {
                t.push(ri, cj, v);
            }
        }
    }
    t.to_csr()
}

pub fn to_dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

/// Coordinate text export: one `row col value` line per stored entry.
pub fn to_coordinate_text(a: &SparseMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplet_iter() {
        let _ = writeln!(s, "{} {} {:.16e}", i, j, v);
    }
    s
}

/// Reverse Cuthill–McKee ordering of the symmetric sparsity graph.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = a
        .row_iter()
        .enumerate()
        .map(|(i, r)| r.col_indices().iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let mut queue = VecDeque::new();
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Sparse Cholesky factor `PAPᵀ = LLᵀ` with a bandwidth-reducing permutation.
pub struct SparseCholesky {
    perm: Vec<usize>,
    factor: CscCholesky<f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky")
            .field("n", &self.perm.len())
            .field("nnz_l", &self.factor.l().nnz())
            .finish()
    }
}

impl SparseCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Solver("cholesky of a non-square matrix".into()));
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Solver("cholesky of an empty matrix".into()));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut coo = CooMatrix::new(n, n);
        for (i, j, v) in a.triplet_iter() {
            coo.push(inv[i], inv[j], *v);
        }
        let csc = CscMatrix::from(&coo);
        let factor = CscCholesky::factor(&csc)
            .map_err(|e| Error::Solver(format!("sparse cholesky failed ({e:?}); matrix not positive definite")))?;
        Ok(Self { perm, factor })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        assert_eq!(b.len(), n, "cholesky solve dimension mismatch");
        let mut bp = DVector::zeros(n);
        for (k, &p) in self.perm.iter().enumerate() {
            bp[k] = b[p];
        }
        let xp = self.factor.solve(&bp);
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = xp[(k, 0)];
        }
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_columns(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.perm.len();
        assert_eq!(b.nrows(), n);
        let mut bp = DMatrix::zeros(n, b.ncols());
        for (k, &p) in self.perm.iter().enumerate() {
            for c in 0..b.ncols() {
                bp[(k, c)] = b[(p, c)];
            }
        }
        let xp = self.factor.solve(&bp);
        let mut x = DMatrix::zeros(n, b.ncols());
        for (k, &p) in self.perm.iter().enumerate() {
            for c in 0..b.ncols() {
                x[(p, c)] = xp[(k, c)];
            }
        }
        x
    }

    /// Smallest diagonal entry of `L`; positive for a successful factorization.
    pub fn min_pivot(&self) -> f64 {
        let l = self.factor.l();
        let mut m = f64::INFINITY;
        for (j, col) in l.col_iter().enumerate() {
            for (&i, &v) in col.row_indices().iter().zip(col.values()) {
                if i == j {
                    m = m.min(v);
                }
            }
        }
        m
    }
}

/// Dense Cholesky with an error instead of `None`.
pub fn dense_cholesky(a: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.cholesky()
        .ok_or_else(|| Error::Solver(format!("{what}: dense cholesky failed, matrix not positive definite")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
                t.push(i - 1, i, -1.0);
            }
        }
        t.to_csr()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.5);
        t.push(1, 0, -1.0);
        let a = t.to_csr();
        assert_eq!(to_dense(&a)[(0, 0)], 3.5);
        assert_eq!(matvec(&a, &[1.0, 1.0]), vec![3.5, -1.0]);
        assert_eq!(matvec_t(&a, &[1.0, 1.0]), vec![2.5, 0.0]);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(17);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves_laplacian() {
        let n = 30;
        let a = laplacian_1d(n);
        let chol = SparseCholesky::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = matvec(&a, &x_true);
        let x = chol.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(chol.min_pivot() > 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(SparseCholesky::factor(&t.to_csr()).is_err());
    }

    #[test]
    fn submatrix_picks_entries() {
        let a = laplacian_1d(4);
        let s = submatrix(&a, &[1, 2], &[1, 2]);
        let d = to_dense(&s);
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(max_asymmetry(&a), 0.0);
    }
}
