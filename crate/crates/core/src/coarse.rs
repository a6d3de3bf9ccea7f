//! Energy-minimizing coarse spaces.
//!
//! Each basis function solves the relaxed problem
//!
//! ```text
//!   a(ψ, v) + Σ_k s_k(π_k ψ, π_k v) = s_i(φ_j^{(i)}, π_i v)   for all v
//! ```
//!
//! on V_h (global space) or on the free nodes of an oversampled region
//! (localized space). With the s_k-orthonormal φ's, s_k(π_k u, π_k v) =
//! Σ_l (g_{k,l}·u)(g_{k,l}·v) where g_{k,l} = S_k φ_l^{(k)}, and the right-hand
//! side is g_{i,j}·v, so the system matrix is `A + Σ_k G_kᵀ G_k`.

use std::fmt;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseCholesky;
use crate::error::{invalid, Error, Result};
use crate::fem::{element_energies, DofMap};
use crate::mesh::{CoefficientField, Mesh};
use crate::partition::{DomainPartition, OversampledRegion};
use crate::sparse::{SparseCholesky, SparseSymMatrix};
use crate::spectral::AuxSpace;

/// Sparse vector with sorted, unique indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseVec {
    /// Keeps nonzero entries; indices must be unique.
    pub fn from_dense_nonzero(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut e: Vec<(usize, f64)> = entries.into_iter().filter(|&(_, v)| v != 0.0).collect();
        e.sort_unstable_by_key(|x| x.0);
        let (idx, val) = e.into_iter().unzip();
        Self { idx, val }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        Self::from_dense_nonzero(v.iter().copied().enumerate())
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            y[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.axpy_into(1.0, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoarseKind {
    Galvis,
    Glb,
    Ms { k: usize },
}

impl fmt::Display for CoarseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoarseKind::Galvis => write!(f, "galvis"),
            CoarseKind::Glb => write!(f, "glb"),
            CoarseKind::Ms { k } => write!(f, "ms({k})"),
        }
    }
}

/// Coarse restriction R_0: one row per basis function over the free nodes.
#[derive(Clone, Debug)]
pub struct CoarseSpace {
    pub kind: CoarseKind,
    pub rows: Vec<SparseVec>,
    /// Basis functions contributed by each subdomain, in row order.
    pub counts: Vec<usize>,
    /// Number of free nodes.
    pub dim: usize,
}

impl CoarseSpace {
    pub fn new(kind: CoarseKind, rows: Vec<SparseVec>, counts: Vec<usize>, dim: usize) -> Self {
        debug_assert_eq!(rows.len(), counts.iter().sum::<usize>());
        Self { kind, rows, counts, dim }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Mean number of basis functions per subdomain.
    pub fn pd(&self) -> f64 {
        self.rows.len() as f64 / self.counts.len() as f64
    }

    /// First row of subdomain `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.counts[..i].iter().sum()
    }

    /// `R_0 r`
    pub fn restrict(&self, r: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.dot(r)).collect()
    }

    /// `z += R_0ᵀ c`
    pub fn prolong_add(&self, c: &[f64], z: &mut [f64]) {
        for (row, &ci) in self.rows.iter().zip(c) {
            row.axpy_into(ci, z);
        }
    }

    pub(crate) fn dense_columns(&self) -> Mat<f64> {
        let mut r = Mat::<f64>::zeros(self.dim, self.rows.len());
        for (c, row) in self.rows.iter().enumerate() {
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                r[(i, c)] = v;
            }
        }
        r
    }

    /// `R_0 A R_0ᵀ`
    pub fn galerkin(&self, a: &SparseSymMatrix) -> Mat<f64> {
        let p = self.rows.len();
        let mut ar = Mat::<f64>::zeros(self.dim, p);
        let mut tmp = vec![0.0; self.dim];
        for (c, row) in self.rows.iter().enumerate() {
            let x = row.to_dense(self.dim);
            a.matvec(&x, &mut tmp);
            for i in 0..self.dim {
                ar[(i, c)] = tmp[i];
            }
        }
        let r = self.dense_columns();
        let mut g = r.transpose() * &ar;
        crate::dense::symmetrize(&mut g);
        g
    }

    /// Row-major dense copy of `R_0 A R_0ᵀ`.
    pub fn galerkin_dense(&self, a: &SparseSymMatrix) -> Vec<f64> {
        let g = self.galerkin(a);
        let p = g.nrows();
        (0..p * p).map(|q| g[(q / p, q % p)]).collect()
    }

    /// Nodal CSV `function,subdomain,j,node,x,y,value`, nonzero entries only.
    pub fn to_csv(&self, mesh: &Mesh, dofs: &DofMap) -> String {
        let mut out = String::from("function,subdomain,j,node,x,y,value\n");
        let mut f = 0;
        for (i, &count) in self.counts.iter().enumerate() {
            for j in 0..count {
                let row = &self.rows[f];
                for (&a, &v) in row.idx.iter().zip(&row.val) {
                    let p = dofs.free[a];
                    let [x, y] = mesh.nodes[p];
                    out.push_str(&format!("{f},{i},{},{p},{x},{y},{v:e}\n", j + 1));
                }
                f += 1;
            }
        }
        out
    }
}

/// π_k v = Σ_j s_k(v, φ_j) φ_j for a nodal vector over all mesh nodes.
/// Returns the coefficients and π_k v over all mesh nodes.
pub fn apply_pi(aux: &AuxSpace, k: usize, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sp = &aux.spectra[k];
    let coeffs: Vec<f64> = aux.functionals[k].iter().map(|g| g.dot(v)).collect();
    let mut out = vec![0.0; v.len()];
    for (phi, &c) in sp.eigenpairs.vectors.iter().zip(&coeffs) {
        for (a, &p) in sp.nodes.iter().enumerate() {
            out[p] += c * phi[a];
        }
    }
    (coeffs, out)
}

/// Everything the relaxed problems need, with the functionals g_{k,l}
/// translated to free-node numbering.
pub struct EnergyForms<'a> {
    pub mesh: &'a Mesh,
    pub rho: &'a CoefficientField,
    pub part: &'a DomainPartition,
    pub dofs: &'a DofMap,
    /// Stiffness on the free nodes.
    pub stiffness: &'a SparseSymMatrix,
    pub aux: &'a AuxSpace,
    free_functionals: Vec<Vec<SparseVec>>,
}

impl<'a> EnergyForms<'a> {
    pub fn new(
        mesh: &'a Mesh,
        rho: &'a CoefficientField,
        part: &'a DomainPartition,
        dofs: &'a DofMap,
        stiffness: &'a SparseSymMatrix,
        aux: &'a AuxSpace,
    ) -> Self {
        let free_functionals = aux
            .functionals
            .iter()
            .map(|gs| {
                gs.iter()
                    .map(|g| {
                        SparseVec::from_dense_nonzero(
                            g.idx.iter().zip(&g.val).filter_map(|(&p, &v)| dofs.index[p].map(|a| (a, v))),
                        )
                    })
                    .collect()
            })
            .collect();
        Self { mesh, rho, part, dofs, stiffness, aux, free_functionals }
    }

    /// g_{k,l} on the free nodes.
    pub fn functional(&self, k: usize, l: usize) -> &SparseVec {
        &self.free_functionals[k][l]
    }

    /// b(u, v) = a(u, v) + Σ_k Σ_l (g_{k,l}·u)(g_{k,l}·v) on free-node vectors.
    pub fn relaxed_bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let penalty: f64 = self.free_functionals.iter().flatten().map(|g| g.dot(u) * g.dot(v)).sum();
        self.stiffness.bilinear(u, v) + penalty
    }
}

/// Solves for all basis functions of subdomain `region.i` on Ω̃_i; rows are
/// returned in free-node numbering (zero extension).
pub fn build_ms_subdomain(region: &OversampledRegion, forms: &EnergyForms<'_>) -> Result<Vec<SparseVec>> {
    let i = region.i;
    let nf = forms.dofs.num_free();
    let free_idx: Vec<usize> = region
        .free_nodes
        .iter()
        .map(|&p| forms.dofs.index[p].expect("inner region nodes are free"))
        .collect();
    let q = free_idx.len();
    let mut local = vec![usize::MAX; nf];
    for (a, &f) in free_idx.iter().enumerate() {
        local[f] = a;
    }

    let mut trip = forms.stiffness.principal_submatrix(&free_idx).triplets();
    for k in 0..forms.part.num_subdomains() {
        if !forms.part.nonoverlap[k].touches_closed(&region.region) {
            continue;
        }
        let rows: Vec<Vec<(usize, f64)>> = forms.free_functionals[k]
            .iter()
            .map(|g| {
                g.idx.iter().zip(&g.val).filter(|(&f, _)| local[f] != usize::MAX).map(|(&f, &v)| (local[f], v)).collect()
            })
            .collect();
        let mut support: Vec<usize> = rows.iter().flatten().map(|e| e.0).collect();
        support.sort_unstable();
        support.dedup();
        let u = support.len();
        if u == 0 {
            continue;
        }
        let mut block = vec![0.0; u * u];
        let mut dense = vec![0.0; u];
        for row in &rows {
            dense.iter_mut().for_each(|x| *x = 0.0);
            for &(a, v) in row {
                dense[support.binary_search(&a).unwrap()] = v;
            }
            for x in 0..u {
                if dense[x] != 0.0 {
                    let dx = dense[x];
                    for y in 0..u {
                        block[x * u + y] += dx * dense[y];
                    }
                }
            }
        }
        for x in 0..u {
            for y in 0..u {
                let v = block[x * u + y];
                if v != 0.0 {
                    trip.push((support[x], support[y], v));
                }
            }
        }
    }
    let b = SparseSymMatrix::from_triplets(q, &trip);
    let chol = SparseCholesky::new(&b).map_err(|e| {
        let d = b.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Error::Factorization(format!(
            "relaxed system of subdomain {i} (k={}, {q} unknowns, diagonal ratio {:.3e}): {e}",
            region.k,
            hi / lo
        ))
    })?;

    let count = forms.aux.count(i);
    let mut rhs = vec![0.0; q * count];
    for j in 0..count {
        let g = &forms.free_functionals[i][j];
        for (&f, &v) in g.idx.iter().zip(&g.val) {
            if local[f] == usize::MAX {
                return invalid(format!("region of subdomain {i} does not contain the support of its own functional"));
            }
            rhs[j * q + local[f]] = v;
        }
    }
    chol.solve_many_in_place(&mut rhs, count);
    Ok((0..count)
        .map(|j| SparseVec::from_dense_nonzero(free_idx.iter().copied().zip(rhs[j * q..(j + 1) * q].iter().copied())))
        .collect())
}

/// Ψ_{j,ms}^{(i)} extended by zero to all free nodes.
pub fn build_ms_basis(i: usize, j: usize, region: &OversampledRegion, forms: &EnergyForms<'_>) -> Result<Vec<f64>> {
    if region.i != i {
        return invalid(format!("region belongs to subdomain {}, not {i}", region.i));
    }
    if j >= forms.aux.count(i) {
        return invalid(format!("subdomain {i} has {} auxiliary functions, asked for {j}", forms.aux.count(i)));
    }
    let rows = build_ms_subdomain(region, forms)?;
    Ok(rows[j].to_dense(forms.dofs.num_free()))
}

/// Every global basis function, by the Woodbury identity
/// `(A + GᵀG)⁻¹ Gᵀ = A⁻¹Gᵀ (I + G A⁻¹ Gᵀ)⁻¹`. Rows follow subdomain order.
pub fn build_glb_all(forms: &EnergyForms<'_>) -> Result<Vec<Vec<f64>>> {
    if forms.part.num_subdomains() < 2 {
        return Err(Error::Degenerate("a single subdomain has an empty auxiliary space".into()));
    }
    let nf = forms.dofs.num_free();
    let gs: Vec<&SparseVec> = forms.free_functionals.iter().flatten().collect();
    let p = gs.len();
    let chol = forms.stiffness.cholesky()?;

    let mut y = vec![0.0; nf * p];
    for (c, g) in gs.iter().enumerate() {
        g.axpy_into(1.0, &mut y[c * nf..(c + 1) * nf]);
    }
    y.par_chunks_mut(nf).for_each(|col| chol.solve_in_place(col));

    let mut cap = Mat::<f64>::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            cap[(a, b)] = gs[a].dot(&y[b * nf..(b + 1) * nf]);
        }
        cap[(a, a)] += 1.0;
    }
    crate::dense::symmetrize(&mut cap);
    let cap = DenseCholesky::new(&cap).map_err(|e| Error::Factorization(format!("capacitance matrix: {e}")))?;

    // Ψᵀ = (I + K)⁻¹ Yᵀ
    let mut yt = Mat::<f64>::from_fn(p, nf, |r, c| y[r * nf + c]);
    cap.solve_mat_in_place(&mut yt);
    Ok((0..p).map(|r| (0..nf).map(|c| yt[(r, c)]).collect()).collect())
}

pub fn build_glb_basis(i: usize, j: usize, forms: &EnergyForms<'_>) -> Result<Vec<f64>> {
    if forms.part.num_subdomains() < 2 {
        return Err(Error::Degenerate("a single subdomain has an empty auxiliary space".into()));
    }
    if j >= forms.aux.count(i) {
        return invalid(format!("subdomain {i} has {} auxiliary functions, asked for {j}", forms.aux.count(i)));
    }
    let offset: usize = (0..i).map(|l| forms.aux.count(l)).sum();
    Ok(build_glb_all(forms)?.swap_remove(offset + j))
}

pub fn build_coarse_space(kind: CoarseKind, forms: &EnergyForms<'_>) -> Result<CoarseSpace> {
    let counts: Vec<usize> = (0..forms.part.num_subdomains()).map(|i| forms.aux.count(i)).collect();
    let nf = forms.dofs.num_free();
    let rows = match kind {
        CoarseKind::Glb => build_glb_all(forms)?.iter().map(|v| SparseVec::from_dense(v)).collect(),
        CoarseKind::Ms { k } => {
            let per: Vec<Vec<SparseVec>> = (0..forms.part.num_subdomains())
                .into_par_iter()
                .map(|i| {
                    let region = crate::partition::build_oversampled(forms.mesh, forms.part, i, k)?;
                    build_ms_subdomain(&region, forms)
                })
                .collect::<Result<_>>()?;
            per.into_iter().flatten().collect()
        }
        CoarseKind::Galvis => {
            return invalid("the baseline space comes from spectral::build_galvis_coarse");
        }
    };
    Ok(CoarseSpace::new(kind, rows, counts, nf))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayEntry {
    pub k: usize,
    /// |ψ|²_a over Ω ∖ Ω_{i,k}.
    pub energy_outside: f64,
    /// Σ ‖π_l ψ‖²_{s_l} over Ω_l ⊂ Ω ∖ Ω_{i,k}.
    pub projection_outside: f64,
}

impl DecayEntry {
    pub fn tail(&self) -> f64 {
        self.energy_outside + self.projection_outside
    }
}

/// Tail of a basis function outside the k-layer coarse neighbourhoods of
/// subdomain `i`, for k = 0..=n.
pub fn decay_profile(psi: &[f64], i: usize, forms: &EnergyForms<'_>) -> Vec<DecayEntry> {
    let mesh = forms.mesh;
    let part = forms.part;
    let full = forms.dofs.to_full(psi);
    let energies = element_energies(mesh, forms.rho, &full);
    // ‖π_l ψ‖²_{s_l} = Σ_j s_l(ψ, φ_j)² by s_l-orthonormality
    let proj: Vec<f64> = forms.free_functionals.iter().map(|gs| gs.iter().map(|g| g.dot(psi).powi(2)).sum()).collect();
    let side = mesh.side();
    (0..=part.n)
        .map(|k| {
            let block = part.coarse_block(i, k);
            let energy_outside = (0..mesh.num_triangles())
                .filter(|&t| {
                    let s = t / 2;
                    !block.contains_square(s / side, s % side)
                })
                .map(|t| energies[t])
                .sum();
            let projection_outside = (0..part.num_subdomains())
                .filter(|&l| part.layer_distance(i, l) > k)
                .map(|l| proj[l])
                .sum();
            DecayEntry { k, energy_outside, projection_outside }
        })
        .collect()
}
