//! P1 assembly: stiffness, weighted mass, load, and the free-node map.
//!
//! Every element integral is closed form (constant gradients, constant
//! coefficient per triangle), so no quadrature error enters.

use crate::error::{invalid, Result};
use crate::mesh::{CoefficientField, Mesh};
use crate::sparse::SparseSymMatrix;

/// Mapping between mesh nodes and free (non-Dirichlet) unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    /// Free index → mesh node.
    pub free: Vec<usize>,
    /// Mesh node → free index.
    pub index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut free = Vec::new();
        let mut index = vec![None; mesh.num_nodes()];
        for p in 0..mesh.num_nodes() {
            if !mesh.boundary_mask[p] {
                index[p] = Some(free.len());
                free.push(p);
            }
        }
        Self { free, index }
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    /// Extends a free-node vector by zero to all mesh nodes.
    pub fn to_full(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.free.len());
        let mut out = vec![0.0; self.index.len()];
        for (a, &p) in self.free.iter().enumerate() {
            out[p] = v[a];
        }
        out
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&p| full[p]).collect()
    }
}

/// Gradients of the three barycentric functions and the triangle area.
pub fn p1_gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles[t];
    let ([x0, y0], [x1, y1], [x2, y2]) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
    let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    let g = [
        [(y1 - y2) / det, (x2 - x1) / det],
        [(y2 - y0) / det, (x0 - x2) / det],
        [(y0 - y1) / det, (x1 - x0) / det],
    ];
    (g, 0.5 * det.abs())
}

/// `coef · ∫ ∇λ_a · ∇λ_b` over triangle `t`.
pub fn element_stiffness(mesh: &Mesh, t: usize, coef: f64) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(mesh, t);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = coef * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// `coef · ∫ λ_a λ_b` over a triangle of the given area.
pub fn element_mass(area: f64, coef: f64) -> [[f64; 3]; 3] {
    let d = coef * area / 6.0;
    let o = coef * area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn check_rho(mesh: &Mesh, rho: &CoefficientField) -> Result<()> {
    if rho.values.len() != mesh.num_triangles() {
        return invalid(format!(
            "coefficient has {} values for {} triangles",
            rho.values.len(),
            mesh.num_triangles()
        ));
    }
    if let Some(v) = rho.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return invalid(format!("coefficient must be positive, found {v}"));
    }
    Ok(())
}

/// Scatters element matrices of `triangles` into the local numbering `local`
/// (mesh node → local index; `usize::MAX` drops the node).
pub(crate) fn scatter<F>(mesh: &Mesh, triangles: &[usize], local: &[usize], dim: usize, element: F) -> SparseSymMatrix
where
    F: Fn(usize) -> Option<[[f64; 3]; 3]>,
{
    let mut trip = Vec::with_capacity(9 * triangles.len());
    for &t in triangles {
        let Some(ke) = element(t) else { continue };
        let tri = mesh.triangles[t];
        for a in 0..3 {
            let i = local[tri[a]];
            if i == usize::MAX {
                continue;
            }
            for b in 0..3 {
                let j = local[tri[b]];
                if j != usize::MAX {
                    trip.push((i, j, ke[a][b]));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(dim, &trip)
}

pub(crate) fn local_numbering(num_nodes: usize, nodes: &[usize]) -> Vec<usize> {
    let mut local = vec![usize::MAX; num_nodes];
    for (a, &p) in nodes.iter().enumerate() {
        local[p] = a;
    }
    local
}

/// Stiffness matrix on all mesh nodes, before boundary elimination.
pub fn assemble_full_stiffness(mesh: &Mesh, rho: &CoefficientField) -> Result<SparseSymMatrix> {
    check_rho(mesh, rho)?;
    let all: Vec<usize> = (0..mesh.num_nodes()).collect();
    let tris: Vec<usize> = (0..mesh.num_triangles()).collect();
    Ok(scatter(mesh, &tris, &all, mesh.num_nodes(), |t| {
        Some(element_stiffness(mesh, t, rho.values[t]))
    }))
}

/// Stiffness matrix on the free nodes (Dirichlet rows and columns eliminated).
pub fn assemble_stiffness(mesh: &Mesh, rho: &CoefficientField) -> Result<SparseSymMatrix> {
    check_rho(mesh, rho)?;
    let dofs = DofMap::new(mesh);
    let local: Vec<usize> = dofs.index.iter().map(|i| i.unwrap_or(usize::MAX)).collect();
    let tris: Vec<usize> = (0..mesh.num_triangles()).collect();
    Ok(scatter(mesh, &tris, &local, dofs.num_free(), |t| {
        Some(element_stiffness(mesh, t, rho.values[t]))
    }))
}

/// Natural-boundary stiffness over `triangles`, numbered by position in `nodes`.
pub fn assemble_local_stiffness(mesh: &Mesh, rho: &CoefficientField, triangles: &[usize], nodes: &[usize]) -> SparseSymMatrix {
    let local = local_numbering(mesh.num_nodes(), nodes);
    scatter(mesh, triangles, &local, nodes.len(), |t| Some(element_stiffness(mesh, t, rho.values[t])))
}

/// Load vector on the free nodes for a per-triangle constant source.
pub fn assemble_load(mesh: &Mesh, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != mesh.num_triangles() {
        return invalid(format!("source has {} values for {} triangles", f.len(), mesh.num_triangles()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return invalid("source must be finite");
    }
    let dofs = DofMap::new(mesh);
    let mut b = vec![0.0; dofs.num_free()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let share = f[t] * mesh.signed_area(t).abs() / 3.0;
        for &p in tri {
            if let Some(a) = dofs.index[p] {
                b[a] += share;
            }
        }
    }
    Ok(b)
}

pub fn assemble_constant_load(mesh: &Mesh, f: f64) -> Result<Vec<f64>> {
    assemble_load(mesh, &vec![f; mesh.num_triangles()])
}

fn check_weight(mesh: &Mesh, weight: &[f64]) -> Result<()> {
    if weight.len() != mesh.num_triangles() {
        return invalid(format!("weight has {} values for {} triangles", weight.len(), mesh.num_triangles()));
    }
    if let Some(w) = weight.iter().find(|w| !(**w >= 0.0)) {
        return invalid(format!("weights must be nonnegative, found {w}"));
    }
    Ok(())
}

/// `∫ ρ w u v` over `support`, on all mesh nodes (no boundary elimination).
pub fn assemble_weighted_mass(mesh: &Mesh, rho: &CoefficientField, weight: &[f64], support: &[usize]) -> Result<SparseSymMatrix> {
    let all: Vec<usize> = (0..mesh.num_nodes()).collect();
    assemble_local_weighted_mass(mesh, rho, weight, support, &all)
}

/// As [`assemble_weighted_mass`], numbered by position in `nodes`.
pub fn assemble_local_weighted_mass(
    mesh: &Mesh,
    rho: &CoefficientField,
    weight: &[f64],
    support: &[usize],
    nodes: &[usize],
) -> Result<SparseSymMatrix> {
    check_rho(mesh, rho)?;
    check_weight(mesh, weight)?;
    let local = local_numbering(mesh.num_nodes(), nodes);
    Ok(scatter(mesh, support, &local, nodes.len(), |t| {
        let c = rho.values[t] * weight[t];
        (c != 0.0).then(|| element_mass(mesh.signed_area(t).abs(), c))
    }))
}

/// Nodal interpolant of the product of two P1 functions.
pub fn nodal_interpolant_product(theta: &[f64], v: &[f64]) -> Vec<f64> {
    assert_eq!(theta.len(), v.len());
    theta.iter().zip(v).map(|(a, b)| a * b).collect()
}

/// Energies `ψ_τᵀ K_τ ψ_τ` per triangle for a nodal vector over all mesh nodes.
pub fn element_energies(mesh: &Mesh, rho: &CoefficientField, psi_full: &[f64]) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|t| {
            let k = element_stiffness(mesh, t, rho.values[t]);
            let tri = mesh.triangles[t];
            let u = [psi_full[tri[0]], psi_full[tri[1]], psi_full[tri[2]]];
            (0..3).map(|a| u[a] * (0..3).map(|b| k[a][b] * u[b]).sum::<f64>()).sum()
        })
        .collect()
}
