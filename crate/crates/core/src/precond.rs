//! Additive two-level overlapping Schwarz preconditioner
//! `M⁻¹ = Σ_i R_iᵀ A_i⁻¹ R_i + R_0ᵀ A_0⁻¹ R_0`.

use rayon::prelude::*;

use crate::coarse::CoarseSpace;
use crate::dense::DenseCholesky;
use crate::error::{invalid, Error, Result};
use crate::fem::DofMap;
use crate::mesh::Mesh;
use crate::partition::DomainPartition;
use crate::sparse::{LinearOperator, SparseCholesky, SparseSymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    OneLevel,
    TwoLevel,
}

#[derive(Debug)]
struct LocalSolve {
    /// Free indices of the strictly interior nodes of Ω_i′.
    dofs: Vec<usize>,
    factor: SparseCholesky,
}

#[derive(Debug)]
struct CoarseSolve {
    space: CoarseSpace,
    factor: DenseCholesky,
}

/// Immutable after construction; `apply` takes `&self`, so one instance can
/// serve several solvers at once.
#[derive(Debug)]
pub struct SchwarzPreconditioner {
    dim: usize,
    locals: Vec<LocalSolve>,
    coarse: Option<CoarseSolve>,
}

pub fn build_preconditioner(
    a: &SparseSymMatrix,
    mesh: &Mesh,
    part: &DomainPartition,
    coarse: Option<CoarseSpace>,
) -> Result<SchwarzPreconditioner> {
    let dofs = DofMap::new(mesh);
    if dofs.num_free() != a.dim() {
        return invalid(format!("matrix has dimension {}, mesh has {} free nodes", a.dim(), dofs.num_free()));
    }
    let locals = (0..part.num_subdomains())
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = part.overlap[i]
                .inner_nodes(mesh)
                .into_iter()
                .map(|p| dofs.index[p].expect("inner nodes are free"))
                .collect();
            let factor = SparseCholesky::new(&a.principal_submatrix(&idx))
                .map_err(|e| Error::Factorization(format!("local problem of subdomain {i}: {e}")))?;
            Ok(LocalSolve { dofs: idx, factor })
        })
        .collect::<Result<Vec<_>>>()?;

    let coarse = match coarse {
        Some(space) if !space.is_empty() => {
            if space.dim != a.dim() {
                return invalid(format!("coarse rows have {} columns, matrix has {}", space.dim, a.dim()));
            }
            let a0 = space.galerkin(a);
            let factor = DenseCholesky::new(&a0).map_err(|e| {
                Error::Factorization(format!("coarse matrix of size {} ({}): {e}", space.len(), space.kind))
            })?;
            Some(CoarseSolve { space, factor })
        }
        _ => None,
    };
    Ok(SchwarzPreconditioner { dim: a.dim(), locals, coarse })
}

impl SchwarzPreconditioner {
    pub fn level(&self) -> Level {
        if self.coarse.is_some() {
            Level::TwoLevel
        } else {
            Level::OneLevel
        }
    }

    pub fn coarse_space(&self) -> Option<&CoarseSpace> {
        self.coarse.as_ref().map(|c| &c.space)
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.as_ref().map_or(0, |c| c.space.len())
    }

    pub fn num_local(&self) -> usize {
        self.locals.len()
    }

    pub fn apply_vec(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        self.apply(r, &mut z);
        z
    }
}

impl LinearOperator for SchwarzPreconditioner {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        assert_eq!(r.len(), self.dim);
        assert_eq!(z.len(), self.dim);
        let local: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .map(|ls| {
                let mut x: Vec<f64> = ls.dofs.iter().map(|&f| r[f]).collect();
                ls.factor.solve_in_place(&mut x);
                x
            })
            .collect();
        z.iter_mut().for_each(|v| *v = 0.0);
        // fixed summation order keeps the result deterministic
        for (ls, x) in self.locals.iter().zip(&local) {
            for (&f, &v) in ls.dofs.iter().zip(x) {
                z[f] += v;
            }
        }
        if let Some(c) = &self.coarse {
            let mut y = c.space.restrict(r);
            c.factor.solve_in_place(&mut y);
            c.space.prolong_add(&y, z);
        }
    }
}
