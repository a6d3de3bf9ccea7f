//! Local generalized eigenproblems a_i(φ, w) = λ s_i(φ, w), the auxiliary
//! space built from them, and the baseline (θ_i φ_j) coarse space.
//!
//! S is singular (it vanishes away from the PoU transition strips), so the
//! pencil is solved in the shifted form `S x = μ (A + S) x`, where `A + S` is
//! positive definite on a connected patch. Then `λ = 1/μ − 1` and
//! `x = L⁻ᵀ y / √μ` is already s-normalized.

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par};
use rayon::prelude::*;

use crate::coarse::{CoarseKind, CoarseSpace, SparseVec};
use crate::dense::{sym_eigen, symmetrize, DenseCholesky};
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_local_stiffness, assemble_local_weighted_mass, DofMap};
use crate::mesh::{CoefficientField, Mesh};
use crate::partition::{DomainPartition, PartitionOfUnity};
use crate::sparse::SparseSymMatrix;

/// μ below this is an infinite eigenvalue (S-null direction).
const MU_FLOOR: f64 = 1e-10;

/// Cutoff Λ and the scale applied to pencil eigenvalues before comparing.
///
/// With `normalize`, the eigenvalues compared to Λ are `λ · H_e/h` where H_e
/// is the side length of the eigenproblem patch (`m + 2d` squares for the
/// baseline on Ω_i′, `m` for the auxiliary problem on Ω_i). This makes the
/// cutoff independent of the fine mesh size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub lambda: f64,
    pub normalize: bool,
}

impl Threshold {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, normalize: true }
    }

    pub fn raw(lambda: f64) -> Self {
        Self { lambda, normalize: false }
    }

    fn scale(&self, patch_squares: usize) -> f64 {
        if self.normalize {
            patch_squares as f64
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// Finite eigenvalues (after scaling), ascending.
    pub values: Vec<f64>,
    /// Eigenvectors of the selected pairs, s-orthonormal, in local numbering.
    pub vectors: Vec<Vec<f64>>,
    pub selected: usize,
}

/// Solves the pencil `(a, s)`; eigenvalues are multiplied by `scale` and those
/// below `lambda` are selected, with at least one selected.
pub fn local_gevp(a: &SparseSymMatrix, s: &SparseSymMatrix, lambda: f64, scale: f64) -> Result<Eigenpairs> {
    let q = a.dim();
    if s.dim() != q {
        return invalid(format!("pencil sizes differ: {} vs {}", q, s.dim()));
    }
    if !(lambda > 0.0) {
        return invalid(format!("threshold must be positive, got {lambda}"));
    }
    if s.is_zero() {
        return Err(Error::Degenerate("weighted mass matrix is identically zero".into()));
    }
    let mut shifted = a.to_faer_dense();
    let sd = s.to_faer_dense();
    shifted += &sd;
    let chol = DenseCholesky::new(&shifted)?;
    let l = chol.factor_l();

    // C = L⁻¹ S L⁻ᵀ
    let mut c = sd;
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let mut c = c.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    symmetrize(&mut c);

    let (mu, y) = sym_eigen(&c)?;
    // descending μ ↔ ascending λ
    let order: Vec<usize> = (0..q).rev().filter(|&r| mu[r] > MU_FLOOR).collect();
    let values: Vec<f64> = order.iter().map(|&r| (1.0 / mu[r] - 1.0).max(0.0) * scale).collect();
    if values.is_empty() {
        return Err(Error::Degenerate("pencil has no finite eigenvalues".into()));
    }
    let selected = values.iter().filter(|&&v| v < lambda).count().max(1);

    let mut x = Mat::<f64>::zeros(q, selected);
    for (col, &r) in order.iter().take(selected).enumerate() {
        let inv = 1.0 / mu[r].sqrt();
        for row in 0..q {
            x[(row, col)] = y[(row, r)] * inv;
        }
    }
    solve_upper_triangular_in_place(l.transpose(), x.as_mut(), Par::Seq);
    let vectors = (0..selected).map(|col| (0..q).map(|row| x[(row, col)]).collect()).collect();
    Ok(Eigenpairs { values, vectors, selected })
}

/// One subdomain's spectrum and selected eigenvectors.
#[derive(Clone, Debug)]
pub struct SubdomainSpectrum {
    pub subdomain: usize,
    /// Mesh nodes of the eigenproblem patch; `vectors` are indexed like this.
    pub nodes: Vec<usize>,
    pub eigenpairs: Eigenpairs,
}

impl SubdomainSpectrum {
    pub fn selected(&self) -> usize {
        self.eigenpairs.selected
    }
}

/// CSV dump `i,j,lambda,selected` with 1-based `j`.
pub fn spectra_to_csv(spectra: &[SubdomainSpectrum]) -> String {
    let mut out = String::from("i,j,lambda,selected\n");
    for sp in spectra {
        for (j, v) in sp.eigenpairs.values.iter().enumerate() {
            out.push_str(&format!("{},{},{:e},{}\n", sp.subdomain, j + 1, v, u8::from(j < sp.selected())));
        }
    }
    out
}

/// Auxiliary space: selected eigenvectors of the pencil on each Ω_i with
/// weight ρ Σ_{l∈n(i)} |∇θ_l|².
#[derive(Clone, Debug)]
pub struct AuxSpace {
    pub threshold: Threshold,
    pub spectra: Vec<SubdomainSpectrum>,
    /// S_i on `spectra[i].nodes`.
    pub masses: Vec<SparseSymMatrix>,
    /// g_{i,j} = S_i φ_j^{(i)} as sparse vectors over mesh nodes; these give
    /// s_i(v, φ_j^{(i)}) = g_{i,j}·v.
    pub functionals: Vec<Vec<SparseVec>>,
}

impl AuxSpace {
    pub fn count(&self, i: usize) -> usize {
        self.spectra[i].selected()
    }

    pub fn total(&self) -> usize {
        self.spectra.iter().map(|s| s.selected()).sum()
    }

    pub fn mean_count(&self) -> f64 {
        self.total() as f64 / self.spectra.len() as f64
    }

    /// φ_j^{(i)} on all mesh nodes.
    pub fn vector_full(&self, i: usize, j: usize, num_nodes: usize) -> Vec<f64> {
        let sp = &self.spectra[i];
        let mut v = vec![0.0; num_nodes];
        for (a, &p) in sp.nodes.iter().enumerate() {
            v[p] = sp.eigenpairs.vectors[j][a];
        }
        v
    }

    /// s_i(u, w) for nodal vectors over all mesh nodes.
    pub fn s_inner(&self, i: usize, u: &[f64], w: &[f64]) -> f64 {
        let nodes = &self.spectra[i].nodes;
        let ul: Vec<f64> = nodes.iter().map(|&p| u[p]).collect();
        let wl: Vec<f64> = nodes.iter().map(|&p| w[p]).collect();
        self.masses[i].bilinear(&ul, &wl)
    }
}

fn check_threshold(t: &Threshold) -> Result<()> {
    if !(t.lambda > 0.0) || !t.lambda.is_finite() {
        return invalid(format!("threshold must be positive and finite, got {}", t.lambda));
    }
    Ok(())
}

pub fn build_aux_space(
    mesh: &Mesh,
    rho: &CoefficientField,
    part: &DomainPartition,
    pou: &PartitionOfUnity,
    threshold: Threshold,
) -> Result<AuxSpace> {
    check_threshold(&threshold)?;
    if part.num_subdomains() < 2 {
        return Err(Error::Degenerate("a single subdomain has no partition-of-unity gradients".into()));
    }
    let scale = threshold.scale(part.m);
    let built: Vec<(SubdomainSpectrum, SparseSymMatrix)> = (0..part.num_subdomains())
        .into_par_iter()
        .map(|i| {
            let b = part.nonoverlap[i];
            let nodes = b.nodes(mesh);
            let tris = b.triangles(mesh);
            let a = assemble_local_stiffness(mesh, rho, &tris, &nodes);
            let s = assemble_local_weighted_mass(mesh, rho, &pou.aggregate, &tris, &nodes)?;
            let eigenpairs = local_gevp(&a, &s, threshold.lambda, scale)
                .map_err(|e| annotate(e, "auxiliary", i))?;
            Ok((SubdomainSpectrum { subdomain: i, nodes, eigenpairs }, s))
        })
        .collect::<Result<_>>()?;
    let (spectra, masses): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let functionals = spectra
        .iter()
        .zip(&masses)
        .map(|(sp, s)| {
            sp.eigenpairs
                .vectors
                .iter()
                .map(|phi| {
                    let g = s.mul(phi);
                    SparseVec::from_dense_nonzero(sp.nodes.iter().copied().zip(g))
                })
                .collect()
        })
        .collect();
    Ok(AuxSpace { threshold, spectra, masses, functionals })
}

fn annotate(e: Error, what: &str, i: usize) -> Error {
    match e {
        Error::Factorization(m) => Error::Factorization(format!("{what} eigenproblem on subdomain {i}: {m}")),
        Error::Eigen(m) => Error::Eigen(format!("{what} eigenproblem on subdomain {i}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("{what} eigenproblem on subdomain {i}: {m}")),
        other => other,
    }
}

/// Spectra of the baseline pencil on each Ω_i′ with weight ρ|∇θ_i|².
pub fn solve_galvis_spectra(
    mesh: &Mesh,
    rho: &CoefficientField,
    part: &DomainPartition,
    pou: &PartitionOfUnity,
    threshold: Threshold,
) -> Result<Vec<SubdomainSpectrum>> {
    check_threshold(&threshold)?;
    if part.num_subdomains() < 2 {
        return Err(Error::Degenerate("θ ≡ 1 for a single subdomain, so the weight vanishes".into()));
    }
    let scale = threshold.scale(part.m + 2 * part.d);
    (0..part.num_subdomains())
        .into_par_iter()
        .map(|i| {
            let b = part.overlap[i];
            let nodes = b.nodes(mesh);
            let tris = b.triangles(mesh);
            let a = assemble_local_stiffness(mesh, rho, &tris, &nodes);
            let s = assemble_local_weighted_mass(mesh, rho, &pou.grad_sq[i], &tris, &nodes)?;
            let eigenpairs = local_gevp(&a, &s, threshold.lambda, scale).map_err(|e| annotate(e, "baseline", i))?;
            Ok(SubdomainSpectrum { subdomain: i, nodes, eigenpairs })
        })
        .collect()
}

/// Coarse space spanned by I^h(θ_i φ_j^{(i)}) restricted to the free nodes.
pub fn galvis_from_spectra(pou: &PartitionOfUnity, dofs: &DofMap, spectra: &[SubdomainSpectrum]) -> CoarseSpace {
    let mut rows = Vec::new();
    let mut counts = Vec::with_capacity(spectra.len());
    for sp in spectra {
        let th = &pou.theta[sp.subdomain];
        for phi in &sp.eigenpairs.vectors {
            rows.push(SparseVec::from_dense_nonzero(
                sp.nodes.iter().zip(phi).filter_map(|(&p, &v)| dofs.index[p].map(|a| (a, th[p] * v))),
            ));
        }
        counts.push(sp.selected());
    }
    CoarseSpace::new(CoarseKind::Galvis, rows, counts, dofs.num_free())
}

pub fn build_galvis_coarse(
    mesh: &Mesh,
    rho: &CoefficientField,
    part: &DomainPartition,
    pou: &PartitionOfUnity,
    threshold: Threshold,
) -> Result<CoarseSpace> {
    let spectra = solve_galvis_spectra(mesh, rho, part, pou, threshold)?;
    Ok(galvis_from_spectra(pou, &DofMap::new(mesh), &spectra))
}
