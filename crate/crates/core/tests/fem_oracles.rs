mod common;

use common::*;
use emschwarz_core::fem::{
    assemble_constant_load, assemble_full_stiffness, assemble_stiffness, assemble_weighted_mass, element_stiffness,
    DofMap,
};
use emschwarz_core::mesh::{build_mesh, sample_coefficient};
use nalgebra::{DVector, Matrix3};
use proptest::prelude::*;

/// Element stiffness from the inverse of the barycentric Vandermonde matrix.
fn vandermonde_stiffness(p: [[f64; 2]; 3], coef: f64) -> Matrix3<f64> {
    let v = Matrix3::new(1.0, p[0][0], p[0][1], 1.0, p[1][0], p[1][1], 1.0, p[2][0], p[2][1]);
    let area = 0.5 * v.determinant().abs();
    let c = v.try_inverse().unwrap();
    let mut k = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            k[(a, b)] = coef * area * (c[(1, a)] * c[(1, b)] + c[(2, a)] * c[(2, b)]);
        }
    }
    k
}

#[test]
fn element_stiffness_matches_vandermonde_oracle() {
    let mesh = build_mesh(2, 3).unwrap();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let oracle = vandermonde_stiffness([mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]], 2.5);
        let k = element_stiffness(&mesh, t, 2.5);
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - oracle[(a, b)]).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn galerkin_solution_matches_dense_oracle() {
    let mesh = build_mesh(4, 4).unwrap();
    let rho = sample_coefficient(&mesh, &unit()).unwrap();
    let a = assemble_stiffness(&mesh, &rho).unwrap();
    let b = assemble_constant_load(&mesh, 1.0).unwrap();
    let u = a.cholesky().unwrap().solve(&b);

    let dense = to_nalgebra(&a);
    let oracle = dense.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
    let e = DVector::from_column_slice(&u) - &oracle;
    let energy = (e.transpose() * &dense * &e)[(0, 0)].sqrt();
    let scale = (oracle.transpose() * &dense * &oracle)[(0, 0)].sqrt();
    assert!(energy <= 1e-10 * scale, "energy error {energy:e}");
    // symmetric problem: the solution peaks at the centre
    let dofs = DofMap::new(&mesh);
    let full = dofs.to_full(&u);
    let centre = full[mesh.node(8, 8)];
    assert!(full.iter().all(|&v| v <= centre + 1e-14));
}

#[test]
fn random_stiffness_is_spd() {
    let mesh = build_mesh(3, 4).unwrap();
    let rho = sample_coefficient(&mesh, &log_uniform(1.0, 1e6, 2)).unwrap();
    let a = assemble_stiffness(&mesh, &rho).unwrap();
    assert!(a.asymmetry() == 0.0);
    for x in random_vectors(20, a.dim(), 9) {
        assert!(a.quad_form(&x) > 0.0);
    }
    let ev = to_nalgebra(&a).symmetric_eigenvalues();
    assert!(ev.min() > 0.0);
}

#[test]
fn full_stiffness_annihilates_constants() {
    let mesh = build_mesh(2, 3).unwrap();
    let rho = sample_coefficient(&mesh, &log_uniform(1e-3, 1e3, 4)).unwrap();
    let a = assemble_full_stiffness(&mesh, &rho).unwrap();
    let y = a.mul(&vec![1.0; mesh.num_nodes()]);
    assert!(y.iter().all(|v| v.abs() < 1e-9 * a.max_abs()));
}

#[test]
fn unit_mass_row_sums() {
    let mesh = build_mesh(2, 3).unwrap();
    let rho = sample_coefficient(&mesh, &unit()).unwrap();
    let all: Vec<usize> = (0..mesh.num_triangles()).collect();
    let m = assemble_weighted_mass(&mesh, &rho, &vec![1.0; mesh.num_triangles()], &all).unwrap();
    let mut expected = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &p in tri {
            expected[p] += mesh.signed_area(t).abs() / 3.0;
        }
    }
    let sums = m.mul(&vec![1.0; mesh.num_nodes()]);
    for (s, e) in sums.iter().zip(&expected) {
        assert!((s - e).abs() < 1e-15);
    }
}

#[test]
fn weighted_mass_is_psd() {
    let s = Setup::new(2, 4, 1, log_uniform(1.0, 1e3, 6));
    let all: Vec<usize> = (0..s.mesh.num_triangles()).collect();
    let m = assemble_weighted_mass(&s.mesh, &s.rho, &s.pou.aggregate, &all).unwrap();
    let dense = to_nalgebra(&m);
    let ev = dense.symmetric_eigenvalues();
    assert!(ev.min() >= -1e-12 * ev.max());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn areas_sum_to_one(n in 1usize..6, m in 1usize..6) {
        let mesh = build_mesh(n, m).unwrap();
        let total: f64 = (0..mesh.num_triangles()).map(|t| mesh.signed_area(t)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((0..mesh.num_triangles()).all(|t| mesh.signed_area(t) > 0.0));
    }

    #[test]
    fn mesh_and_field_are_deterministic(n in 1usize..5, m in 1usize..5, seed in any::<u64>()) {
        let a = build_mesh(n, m).unwrap();
        let b = build_mesh(n, m).unwrap();
        prop_assert_eq!(&a.nodes, &b.nodes);
        prop_assert_eq!(&a.triangles, &b.triangles);
        let spec = log_uniform(1.0, 1e6, seed);
        let ra = sample_coefficient(&a, &spec).unwrap();
        let rb = sample_coefficient(&b, &spec).unwrap();
        prop_assert!(ra.values.iter().zip(&rb.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(ra.min() >= 1.0 && ra.max() <= 1e6);
    }

    #[test]
    fn energy_is_positive(seed in any::<u64>()) {
        let mesh = build_mesh(2, 2).unwrap();
        let rho = sample_coefficient(&mesh, &log_uniform(1e-3, 1e3, seed)).unwrap();
        let a = assemble_stiffness(&mesh, &rho).unwrap();
        for x in random_vectors(4, a.dim(), seed ^ 0x55) {
            prop_assert!(a.quad_form(&x) > 0.0);
        }
    }
}
