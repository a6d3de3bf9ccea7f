//! Compressed-row symmetric matrices and the sparse Cholesky wrapper.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

/// Anything that maps a vector to a vector linearly.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Symmetric matrix stored row by row; both triangles are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Duplicates are summed. Entry `(i, j)` and `(j, i)` must both be supplied
    /// by the caller when they are meant to be present.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for &(i, j, _) in triplets {
            assert!(i < dim && j < dim, "triplet ({i}, {j}) out of range for dim {dim}");
            counts[i + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..dim {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|q| (cols[q], vals[q])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { dim, row_ptr, col_idx, values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(q) => self.values[r.start + q],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for q in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[q] * x[self.col_idx[q]];
            }
            y[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs() / scale);
            }
        }
        worst
    }

    /// Principal submatrix on `idx` (local ordering follows `idx`).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.dim];
        for (a, &i) in idx.iter().enumerate() {
            local[i] = a;
        }
        let mut trip = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if local[j] != usize::MAX {
                    trip.push((a, local[j], v));
                }
            }
        }
        Self::from_triplets(idx.len(), &trip)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = self.triplets();
        trip.extend(other.triplets());
        Self::from_triplets(self.dim, &trip)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.dim).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for (j, v) in self.row(i) {
                d[i * n + j] = v;
            }
        }
        d
    }

    pub(crate) fn to_faer_dense(&self) -> faer::Mat<f64> {
        let mut d = faer::Mat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate format, symmetric, lower triangle, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<_> = self.triplets().into_iter().filter(|&(i, j, _)| j <= i).collect();
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        out.push_str(&format!("{} {} {}\n", self.dim, self.dim, lower.len()));
        for (i, j, v) in lower {
            out.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
        }
        out
    }

    pub fn from_matrix_market(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let bad = |l: &str| Error::Parse(format!("bad Matrix Market line {l:?}"));
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let dims: Vec<usize> = header.split_whitespace().map(|s| s.parse().map_err(|_| bad(header))).collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != dims[1] {
            return Err(bad(header));
        }
        let mut trip = Vec::with_capacity(2 * dims[2]);
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(l));
            }
            let i: usize = f[0].parse().map_err(|_| bad(l))?;
            let j: usize = f[1].parse().map_err(|_| bad(l))?;
            let v: f64 = f[2].parse().map_err(|_| bad(l))?;
            if i == 0 || j == 0 || i > dims[0] || j > dims[0] {
                return Err(bad(l));
            }
            trip.push((i - 1, j - 1, v));
            if i != j {
                trip.push((j - 1, i - 1, v));
            }
        }
        Ok(Self::from_triplets(dims[0], &trip))
    }

    pub fn cholesky(&self) -> Result<SparseCholesky> {
        SparseCholesky::new(self)
    }
}

impl LinearOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

/// Supernodal sparse Cholesky with a fill-reducing ordering.
pub struct SparseCholesky {
    dim: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("dim", &self.dim).finish()
    }
}

impl SparseCholesky {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        if a.dim == 0 {
            return Err(Error::Factorization("empty matrix".into()));
        }
        // a symmetric CSR matrix is its own CSC transpose
        let symbolic = SymbolicSparseColMatRef::new_checked(a.dim, a.dim, &a.row_ptr, None, &a.col_idx);
        let mat = SparseColMatRef::new(symbolic, &a.values);
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("sparse Cholesky of a {}x{} matrix: {e:?}", a.dim, a.dim)))?;
        Ok(Self { dim: a.dim, llt })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(x, self.dim, 1));
    }

    /// Solves for `ncols` right-hand sides stored column-major in `x`.
    pub fn solve_many_in_place(&self, x: &mut [f64], ncols: usize) {
        assert_eq!(x.len(), self.dim * ncols);
        if ncols > 0 {
            self.llt.solve_in_place(MatMut::from_column_major_slice_mut(x, self.dim, ncols));
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

impl LinearOperator for SparseCholesky {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.solve_in_place(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseSymMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 0, 1.0), (0, 1, 1.0), (1, 1, 4.0)]);
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn cholesky_solves() {
        let a = laplace_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul(&x);
        let y = a.cholesky().unwrap().solve(&b);
        for i in 0..50 {
            assert!((x[i] - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_many() {
        let a = laplace_1d(7);
        let f = a.cholesky().unwrap();
        let mut b = vec![0.0; 14];
        b[0] = 1.0;
        b[7 + 6] = 1.0;
        f.solve_many_in_place(&mut b, 2);
        let e0 = a.mul(&b[..7]);
        assert!((e0[0] - 1.0).abs() < 1e-12 && e0[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(a.cholesky().is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = laplace_1d(5);
        let text = a.to_matrix_market();
        assert!(text.starts_with("%%MatrixMarket"));
        assert_eq!(SparseSymMatrix::from_matrix_market(&text).unwrap(), a);
    }

    #[test]
    fn submatrix() {
        let a = laplace_1d(5);
        let s = a.principal_submatrix(&[4, 3, 0]);
        assert_eq!(s.get(0, 1), -1.0);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(2, 0), 0.0);
    }
}
