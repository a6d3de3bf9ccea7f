//! Subdomains, overlaps, the partition of unity and oversampled regions.
//!
//! All regions here are axis-aligned rectangles of fine squares, so they are
//! carried as [`SquareBox`]es and node/triangle sets are generated on demand.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fem::p1_gradients;
use crate::mesh::Mesh;

/// Half-open range of fine squares `[r0, r1) × [c0, c1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SquareBox {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl SquareBox {
    pub fn whole(side: usize) -> Self {
        Self { r0: 0, r1: side, c0: 0, c1: side }
    }

    /// Grows by `layers` squares on every side, clipped to `[0, side)`.
    pub fn grow(&self, layers: usize, side: usize) -> Self {
        Self {
            r0: self.r0.saturating_sub(layers),
            r1: (self.r1 + layers).min(side),
            c0: self.c0.saturating_sub(layers),
            c1: (self.c1 + layers).min(side),
        }
    }

    pub fn contains_box(&self, o: &SquareBox) -> bool {
        self.r0 <= o.r0 && o.r1 <= self.r1 && self.c0 <= o.c0 && o.c1 <= self.c1
    }

    pub fn contains_square(&self, r: usize, c: usize) -> bool {
        (self.r0..self.r1).contains(&r) && (self.c0..self.c1).contains(&c)
    }

    /// True when node `(row, col)` lies in the closed box.
    pub fn contains_node(&self, row: usize, col: usize) -> bool {
        (self.r0..=self.r1).contains(&row) && (self.c0..=self.c1).contains(&col)
    }

    /// Strictly inside along each axis.
    pub fn strictly_contains_node(&self, row: usize, col: usize) -> bool {
        self.r0 < row && row < self.r1 && self.c0 < col && col < self.c1
    }

    /// Interior in the partition-of-unity sense: strictly inside, except that
    /// box sides lying on ∂Ω count as interior.
    pub fn pou_interior(&self, row: usize, col: usize, side: usize) -> bool {
        let along = |p: usize, a: usize, b: usize| (a < p && p < b) || (p == 0 && a == 0) || (p == side && b == side);
        along(row, self.r0, self.r1) && along(col, self.c0, self.c1)
    }

    pub fn num_squares(&self) -> usize {
        (self.r1 - self.r0) * (self.c1 - self.c0)
    }

    pub fn triangles(&self, mesh: &Mesh) -> Vec<usize> {
        let side = mesh.side();
        let mut out = Vec::with_capacity(2 * self.num_squares());
        for r in self.r0..self.r1 {
            for c in self.c0..self.c1 {
                let s = r * side + c;
                out.push(2 * s);
                out.push(2 * s + 1);
            }
        }
        out
    }

    /// Nodes of the closed box, row-major.
    pub fn nodes(&self, mesh: &Mesh) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.r1 - self.r0 + 1) * (self.c1 - self.c0 + 1));
        for r in self.r0..=self.r1 {
            for c in self.c0..=self.c1 {
                out.push(mesh.node(r, c));
            }
        }
        out
    }

    /// Nodes strictly inside; these are never on ∂Ω.
    pub fn inner_nodes(&self, mesh: &Mesh) -> Vec<usize> {
        let mut out = Vec::new();
        for r in self.r0 + 1..self.r1 {
            for c in self.c0 + 1..self.c1 {
                out.push(mesh.node(r, c));
            }
        }
        out
    }

    /// Chebyshev gap in squares between two boxes (0 if they touch or overlap).
    pub fn touches_closed(&self, o: &SquareBox) -> bool {
        self.r0 <= o.r1 && o.r0 <= self.r1 && self.c0 <= o.c1 && o.c0 <= self.c1
    }
}

#[derive(Clone, Debug)]
pub struct DomainPartition {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Ω_i, indexed `i = I·n + J` with `I` the subdomain row.
    pub nonoverlap: Vec<SquareBox>,
    /// Ω_i′.
    pub overlap: Vec<SquareBox>,
    /// 𝒩(x) per mesh node (counted before the ownership fallback).
    pub multiplicity: Vec<u32>,
    /// n(i): subdomains whose θ is nonzero somewhere on Ω_i.
    pub neighbors: Vec<Vec<usize>>,
}

impl DomainPartition {
    pub fn num_subdomains(&self) -> usize {
        self.n * self.n
    }

    pub fn subdomain_rc(&self, i: usize) -> (usize, usize) {
        (i / self.n, i % self.n)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn side(&self) -> usize {
        self.n * self.m
    }

    /// Chebyshev distance in the subdomain grid.
    pub fn layer_distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = self.subdomain_rc(i);
        let (c, d) = self.subdomain_rc(j);
        a.abs_diff(c).max(b.abs_diff(d))
    }

    /// Subdomain owning a node when no overlap box claims it (only for d = 0).
    pub fn owner(&self, row: usize, col: usize) -> usize {
        self.index((row / self.m).min(self.n - 1), (col / self.m).min(self.n - 1))
    }

    /// Nodes where θ_l may be nonzero.
    pub fn pou_nodes(&self, mesh: &Mesh, l: usize) -> Vec<usize> {
        let b = self.overlap[l];
        let side = mesh.side();
        b.nodes(mesh)
            .into_iter()
            .filter(|&p| {
                let (r, c) = mesh.node_rc(p);
                b.pou_interior(r, c, side) || (self.multiplicity[p] == 0 && self.owner(r, c) == l)
            })
            .collect()
    }

    /// Union of Ω_j with layer distance ≤ k from subdomain i (no fine extension).
    pub fn coarse_block(&self, i: usize, k: usize) -> SquareBox {
        let (a, b) = self.subdomain_rc(i);
        let m = self.m;
        SquareBox {
            r0: a.saturating_sub(k) * m,
            r1: (a + k + 1).min(self.n) * m,
            c0: b.saturating_sub(k) * m,
            c1: (b + k + 1).min(self.n) * m,
        }
    }

    pub fn summary(&self, mesh: &Mesh) -> PartitionSummary {
        let mut histogram = [0usize; 5];
        for &c in &self.multiplicity {
            histogram[(c as usize).min(4)] += 1;
        }
        let subdomains = (0..self.num_subdomains())
            .map(|i| {
                let (o, w) = (self.nonoverlap[i], self.overlap[i]);
                SubdomainSummary {
                    index: i,
                    nonoverlap_nodes: o.nodes(mesh).len(),
                    overlap_nodes: w.nodes(mesh).len(),
                    local_dofs: w.inner_nodes(mesh).len(),
                    overlap_widths: [o.r0 - w.r0, w.r1 - o.r1, o.c0 - w.c0, w.c1 - o.c1],
                    neighbors: self.neighbors[i].clone(),
                }
            })
            .collect();
        PartitionSummary { n: self.n, m: self.m, d: self.d, multiplicity_histogram: histogram.to_vec(), subdomains }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubdomainSummary {
    pub index: usize,
    pub nonoverlap_nodes: usize,
    pub overlap_nodes: usize,
    pub local_dofs: usize,
    /// Fine layers added below, above, left and right (after clipping).
    pub overlap_widths: [usize; 4],
    pub neighbors: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionSummary {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Count of nodes with 𝒩 = 0, 1, 2, 3, ≥4.
    pub multiplicity_histogram: Vec<usize>,
    pub subdomains: Vec<SubdomainSummary>,
}

impl PartitionSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn build_partition(mesh: &Mesh, d: usize) -> Result<DomainPartition> {
    let (n, m) = (mesh.n, mesh.m);
    if d >= m {
        return invalid(format!("overlap d={d} must be smaller than m={m}"));
    }
    let side = mesh.side();
    let mut nonoverlap = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            nonoverlap.push(SquareBox { r0: a * m, r1: (a + 1) * m, c0: b * m, c1: (b + 1) * m });
        }
    }
    let overlap: Vec<SquareBox> = nonoverlap.iter().map(|b| b.grow(d, side)).collect();

    let mut multiplicity = vec![0u32; mesh.num_nodes()];
    for b in &overlap {
        for p in b.nodes(mesh) {
            let (r, c) = mesh.node_rc(p);
            if b.pou_interior(r, c, side) {
                multiplicity[p] += 1;
            }
        }
    }

    let mut part = DomainPartition { n, m, d, nonoverlap, overlap, multiplicity, neighbors: Vec::new() };

    // θ_l is nonzero on Ω_i iff a node of θ_l's support lies in the closed Ω_i
    let supports: Vec<Vec<usize>> = (0..n * n).map(|l| part.pou_nodes(mesh, l)).collect();
    part.neighbors = (0..n * n)
        .map(|i| {
            let b = part.nonoverlap[i];
            (0..n * n)
                .filter(|&l| {
                    supports[l].iter().any(|&p| {
                        let (r, c) = mesh.node_rc(p);
                        b.contains_node(r, c)
                    })
                })
                .collect()
        })
        .collect();
    Ok(part)
}

#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    /// θ_i over all mesh nodes.
    pub theta: Vec<Vec<f64>>,
    /// |∇θ_i|² per triangle.
    pub grad_sq: Vec<Vec<f64>>,
    /// Σ_l |∇θ_l|² per triangle; on Ω_i this equals the sum over n(i).
    pub aggregate: Vec<f64>,
}

impl PartitionOfUnity {
    /// Weight of s_i restricted to Ω_i's triangles (zero elsewhere).
    pub fn aux_weight(&self, mesh: &Mesh, part: &DomainPartition, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; mesh.num_triangles()];
        for t in part.nonoverlap[i].triangles(mesh) {
            w[t] = self.aggregate[t];
        }
        w
    }
}

pub fn build_pou(mesh: &Mesh, part: &DomainPartition) -> Result<PartitionOfUnity> {
    let count = part.num_subdomains();
    let side = mesh.side();
    let mut theta = vec![vec![0.0; mesh.num_nodes()]; count];
    for p in 0..mesh.num_nodes() {
        let (r, c) = mesh.node_rc(p);
        let mult = part.multiplicity[p];
        if mult == 0 {
            if part.d > 0 {
                return Err(Error::Degenerate(format!("node {p} is interior to no overlapping subdomain")));
            }
            theta[part.owner(r, c)][p] = 1.0;
            continue;
        }
        let share = 1.0 / mult as f64;
        for (l, b) in part.overlap.iter().enumerate() {
            if b.contains_node(r, c) && b.pou_interior(r, c, side) {
                theta[l][p] = share;
            }
        }
    }

    let mut grad_sq = vec![vec![0.0; mesh.num_triangles()]; count];
    let mut aggregate = vec![0.0; mesh.num_triangles()];
    for (l, th) in theta.iter().enumerate() {
        // gradients can only be nonzero on triangles touching the support,
        // which lies inside the closed overlap box
        for t in part.overlap[l].grow(1, side).triangles(mesh) {
            let tri = mesh.triangles[t];
            let (g, _) = p1_gradients(mesh, t);
            let (mut gx, mut gy) = (0.0, 0.0);
            for a in 0..3 {
                gx += th[tri[a]] * g[a][0];
                gy += th[tri[a]] * g[a][1];
            }
            let v = gx * gx + gy * gy;
            grad_sq[l][t] = v;
            aggregate[t] += v;
        }
    }
    Ok(PartitionOfUnity { theta, grad_sq, aggregate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OversampledRegion {
    pub i: usize,
    pub k: usize,
    /// Ω̃_i as a box of fine squares.
    pub region: SquareBox,
    /// Mesh nodes of the unknowns of Ṽ_i (strictly interior, hence free).
    pub free_nodes: Vec<usize>,
}

impl OversampledRegion {
    pub fn triangles(&self, mesh: &Mesh) -> Vec<usize> {
        self.region.triangles(mesh)
    }
}

pub fn build_oversampled(mesh: &Mesh, part: &DomainPartition, i: usize, k: usize) -> Result<OversampledRegion> {
    if i >= part.num_subdomains() {
        return invalid(format!("subdomain {i} out of range"));
    }
    let region = part.coarse_block(i, k).grow(part.d, mesh.side());
    Ok(OversampledRegion { i, k, region, free_nodes: region.inner_nodes(mesh) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn no_overlap_uses_owner() {
        let mesh = build_mesh(2, 4).unwrap();
        let part = build_partition(&mesh, 0).unwrap();
        assert_eq!(part.overlap, part.nonoverlap);
        let centre = mesh.node(4, 4);
        assert_eq!(part.multiplicity[centre], 0);
        let pou = build_pou(&mesh, &part).unwrap();
        let claimed: Vec<f64> = pou.theta.iter().map(|t| t[centre]).collect();
        assert_eq!(claimed.iter().sum::<f64>(), 1.0);
        assert_eq!(claimed.iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn overlap_patch_size() {
        let mesh = build_mesh(6, 10).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        let i = part.index(2, 3);
        let b = part.overlap[i];
        assert_eq!((b.r1 - b.r0, b.c1 - b.c0), (12, 12));
        assert_eq!(b.triangles(&mesh).len(), 2 * 144);
        assert!(b.contains_box(&part.nonoverlap[i]));
    }

    #[test]
    fn pou_sums_to_one_exactly() {
        let mesh = build_mesh(2, 4).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        let pou = build_pou(&mesh, &part).unwrap();
        assert_eq!(mesh.num_nodes(), 81);
        for p in 0..81 {
            let s: f64 = pou.theta.iter().map(|t| t[p]).sum();
            assert_eq!(s, 1.0, "node {p}");
        }
    }

    #[test]
    fn strip_values_and_gradient_bound() {
        let mesh = build_mesh(2, 4).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        let pou = build_pou(&mesh, &part).unwrap();
        let allowed = [0.0, 0.25, 0.5, 1.0];
        for th in &pou.theta {
            assert!(th.iter().all(|v| allowed.contains(v)));
        }
        // hand enumeration: the strip nodes of row 4 away from the centre carry 1/2
        assert_eq!(pou.theta[0][mesh.node(4, 1)], 0.5);
        assert_eq!(pou.theta[0][mesh.node(4, 4)], 0.25);
        assert_eq!(pou.theta[0][mesh.node(2, 2)], 1.0);
        assert_eq!(pou.theta[0][mesh.node(5, 2)], 0.0);
        let delta = mesh.h;
        let bound = (1.0 / (2.0 * delta)).powi(2) * 2.0;
        for g in &pou.grad_sq {
            assert!(g.iter().all(|&v| v <= bound * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn single_subdomain() {
        let mesh = build_mesh(1, 3).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        let pou = build_pou(&mesh, &part).unwrap();
        assert!(pou.theta[0].iter().all(|&v| v == 1.0));
        assert!(pou.aggregate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wide_overlap() {
        let mesh = build_mesh(2, 3).unwrap();
        assert!(build_partition(&mesh, 3).is_err());
    }

    #[test]
    fn oversampled_regions() {
        let mesh = build_mesh(6, 10).unwrap();
        let p0 = build_partition(&mesh, 0).unwrap();
        let r = build_oversampled(&mesh, &p0, 0, 0).unwrap();
        assert_eq!(r.region, p0.nonoverlap[0]);

        let p1 = build_partition(&mesh, 1).unwrap();
        let i = p1.index(2, 2);
        let r = build_oversampled(&mesh, &p1, i, 1).unwrap();
        assert_eq!(r.region, SquareBox { r0: 9, r1: 41, c0: 9, c1: 41 });
        assert!(r.region.contains_box(&p1.overlap[i]));

        let r = build_oversampled(&mesh, &p1, 7, 6).unwrap();
        assert_eq!(r.region, SquareBox::whole(60));
        assert_eq!(r.free_nodes.len(), 59 * 59);
    }

    #[test]
    fn neighbors_of_corner() {
        let mesh = build_mesh(3, 4).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        assert_eq!(part.neighbors[0], vec![0, 1, 3, 4]);
        assert_eq!(part.neighbors[4].len(), 9);
    }

    #[test]
    fn aggregate_vanishes_deep_inside() {
        let mesh = build_mesh(3, 10).unwrap();
        let part = build_partition(&mesh, 2).unwrap();
        let pou = build_pou(&mesh, &part).unwrap();
        let centre = SquareBox { r0: 13, r1: 17, c0: 13, c1: 17 };
        for t in centre.triangles(&mesh) {
            assert_eq!(pou.aggregate[t], 0.0);
        }
    }

    #[test]
    fn summary_json() {
        let mesh = build_mesh(2, 4).unwrap();
        let part = build_partition(&mesh, 1).unwrap();
        let s = part.summary(&mesh);
        assert_eq!(s.multiplicity_histogram.iter().sum::<usize>(), 81);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["subdomains"].as_array().unwrap().len(), 4);
        assert_eq!(v["subdomains"][0]["overlap_widths"], serde_json::json!([0, 1, 0, 1]));
    }
}
