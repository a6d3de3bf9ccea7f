//! Small dense helpers over faer.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatMut, Side};

use crate::error::{Error, Result};

/// Dense Cholesky factor used for coarse problems.
pub struct DenseCholesky {
    n: usize,
    llt: faer::linalg::solvers::Llt<f64>,
}

impl DenseCholesky {
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Factorization(format!("dense Cholesky of a {}x{} matrix: {e:?}", a.nrows(), a.ncols())))?;
        Ok(Self { n: a.nrows(), llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.llt.solve_in_place(MatMut::from_column_major_slice_mut(x, self.n, 1));
    }

    pub fn solve_mat_in_place(&self, x: &mut Mat<f64>) {
        self.llt.solve_in_place(x.as_mut());
    }

    pub fn factor_l(&self) -> faer::MatRef<'_, f64> {
        self.llt.L()
    }
}

impl std::fmt::Debug for DenseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseCholesky").field("n", &self.n).finish()
    }
}

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
