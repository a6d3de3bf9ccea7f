//! Preconditioned conjugate gradients with Lanczos extreme-eigenvalue
//! estimates, and a dense spectral oracle for small systems.

use faer::Mat;
use serde::Serialize;

use crate::dense::{sym_eigenvalues, symmetrize, DenseCholesky};
use crate::error::{invalid, Error, Result};
use crate::sparse::{LinearOperator, SparseSymMatrix};

/// Largest system accepted by [`dense_spectrum_oracle`].
pub const DENSE_ORACLE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PcgOptions {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-6, maxit: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// √(rᵀM⁻¹r) before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub kappa: Option<f64>,
    /// Mean coarse basis count per subdomain, filled in by the caller.
    pub pd: Option<f64>,
    pub converged: bool,
    #[serde(skip)]
    pub solution: Vec<f64>,
}

impl SolveReport {
    pub fn with_pd(mut self, pd: f64) -> Self {
        self.pd = Some(pd);
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues of the Lanczos tridiagonal assembled from the PCG coefficients.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> Result<Option<(f64, f64)>> {
    let k = alphas.len();
    if k == 0 {
        return Ok(None);
    }
    let mut t = Mat::<f64>::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = 1.0 / alphas[j] + if j > 0 { betas[j - 1] / alphas[j - 1] } else { 0.0 };
        if j + 1 < k {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let ev = sym_eigenvalues(&t)?;
    Ok(Some((ev[0], ev[k - 1])))
}

/// Solves `A x = b` from `x₀ = 0`, stopping once
/// `√(rᵀM⁻¹r) ≤ tol · √(bᵀM⁻¹b)`.
pub fn pcg(a: &impl LinearOperator, m: &impl LinearOperator, b: &[f64], opts: PcgOptions) -> Result<SolveReport> {
    let n = a.dim();
    if m.dim() != n || b.len() != n {
        return invalid(format!("dimension mismatch: A {n}, M {}, b {}", m.dim(), b.len()));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return invalid(format!("tolerance must lie in (0, 1), got {}", opts.tol));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return invalid("right-hand side is not finite");
    }
    let mut x = vec![0.0; n];
    if b.iter().all(|&v| v == 0.0) {
        return Ok(SolveReport {
            iterations: 0,
            residual_history: vec![0.0],
            lambda_min: None,
            lambda_max: None,
            kappa: None,
            pd: None,
            converged: true,
            solution: x,
        });
    }

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::Breakdown(format!("preconditioner is not positive definite (rᵀM⁻¹r = {rz:e})")));
    }
    let r0 = rz.sqrt();
    let mut history = vec![r0];
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let mut converged = false;

    for _ in 0..opts.maxit {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Breakdown(format!("non-positive curvature pᵀAp = {pq:e}")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        alphas.push(alpha);
        if rz_new < 0.0 {
            return Err(Error::Breakdown(format!("preconditioner is not positive definite (rᵀM⁻¹r = {rz_new:e})")));
        }
        history.push(rz_new.sqrt());
        if rz_new.sqrt() <= opts.tol * r0 {
            converged = true;
            break;
        }
        let beta = rz_new / rz;
        betas.push(beta);
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }

    let extremes = lanczos_extremes(&alphas, &betas)?;
    Ok(SolveReport {
        iterations: alphas.len(),
        residual_history: history,
        lambda_min: extremes.map(|e| e.0),
        lambda_max: extremes.map(|e| e.1),
        kappa: extremes.map(|(lo, hi)| hi / lo),
        pd: None,
        converged,
        solution: x,
    })
}

/// All eigenvalues of `M⁻¹A`, ascending, via `Lᵀ M⁻¹ L` with `A = LLᵀ`.
pub fn dense_spectrum_oracle(a: &SparseSymMatrix, m: &impl LinearOperator) -> Result<Vec<f64>> {
    let n = a.dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::TooLarge { size: n, limit: DENSE_ORACLE_LIMIT });
    }
    if m.dim() != n {
        return invalid(format!("dimension mismatch: A {n}, M {}", m.dim()));
    }
    let chol = DenseCholesky::new(&a.to_faer_dense())?;
    let l = chol.factor_l();
    // M⁻¹ L, column by column
    let mut ml = Mat::<f64>::zeros(n, n);
    let mut col = vec![0.0; n];
    let mut out = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = l[(i, j)];
        }
        m.apply(&col, &mut out);
        for i in 0..n {
            ml[(i, j)] = out[i];
        }
    }
    let mut c = l.transpose() * &ml;
    symmetrize(&mut c);
    sym_eigenvalues(&c)
}

/// Dense `A⁻¹` applied as an operator; handy as an exact preconditioner.
pub struct DenseInverse {
    factor: DenseCholesky,
}

impl DenseInverse {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        Ok(Self { factor: DenseCholesky::new(&a.to_faer_dense())? })
    }
}

impl LinearOperator for DenseInverse {
    fn dim(&self) -> usize {
        self.factor.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.factor.solve_in_place(y);
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

    struct Identity(usize);
    impl LinearOperator for Identity {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            y.copy_from_slice(x)
        }
    }

    #[test]
    fn exact_preconditioner_single_step() {
        let a = laplace_1d(30);
        let m = DenseInverse::new(&a).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let rep = pcg(&a, &m, &b, PcgOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!((rep.lambda_min.unwrap() - 1.0).abs() < 1e-10);
        assert!((rep.lambda_max.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_rhs() {
        let a = laplace_1d(4);
        let rep = pcg(&a, &Identity(4), &[0.0; 4], PcgOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.solution, vec![0.0; 4]);
        assert!(rep.lambda_min.is_none() && rep.kappa.is_none());
    }

    #[test]
    fn laplacian_spectrum() {
        let n = 20;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * (i as f64 * 1.7).sin()).collect();
        let rep = pcg(&a, &Identity(n), &b, PcgOptions { tol: 1e-12, maxit: 100 }).unwrap();
        let exact = |k: usize| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let oracle = dense_spectrum_oracle(&a, &Identity(n)).unwrap();
        assert!((oracle[0] - exact(1)).abs() < 1e-12);
        assert!((oracle[n - 1] - exact(n)).abs() < 1e-12);
        assert!((rep.lambda_min.unwrap() - exact(1)).abs() < 1e-8);
        assert!((rep.lambda_max.unwrap() - exact(n)).abs() < 1e-8);
        let ax = a.mul(&rep.solution);
        assert!(ax.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-9));
    }

    #[test]
    fn indefinite_breaks_down() {
        let a = SparseSymMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(pcg(&a, &Identity(2), &[0.0, 1.0], PcgOptions::default()), Err(Error::Breakdown(_))));
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = laplace_1d(50);
        let rep = pcg(&a, &Identity(50), &vec![1.0; 50], PcgOptions { tol: 1e-12, maxit: 3 }).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert_eq!(rep.residual_history.len(), 4);
    }

    #[test]
    fn oracle_identity_pencil() {
        let a = laplace_1d(12);
        let m = DenseInverse::new(&a).unwrap();
        let ev = dense_spectrum_oracle(&a, &m).unwrap();
        assert!(ev.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}
