mod common;

use common::*;
use emschwarz_core::coarse::{
    apply_pi, build_coarse_space, build_glb_all, build_glb_basis, build_ms_basis, build_ms_subdomain,
    decay_profile, CoarseKind, EnergyForms,
};
use emschwarz_core::partition::build_oversampled;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Relative residual of b(ψ, v) = s_i(φ_j, v) for one test vector.
fn residual(forms: &EnergyForms<'_>, i: usize, j: usize, psi: &[f64], v: &[f64]) -> f64 {
    let lhs = forms.relaxed_bilinear(psi, v);
    let rhs = forms.functional(i, j).dot(v);
    let scale = (forms.relaxed_bilinear(psi, psi) * forms.relaxed_bilinear(v, v)).sqrt();
    (lhs - rhs).abs() / scale
}

#[test]
fn projection_is_idempotent() {
    let s = Setup::new(3, 4, 1, log_uniform(1.0, 1e6, 4));
    let aux = s.aux(ms_lambda(4));
    for (c, v) in random_vectors(5, s.mesh.num_nodes(), 21).into_iter().enumerate() {
        let k = c % s.part.num_subdomains();
        let (_, once) = apply_pi(&aux, k, &v);
        let (_, twice) = apply_pi(&aux, k, &once);
        let diff: Vec<f64> = once.iter().zip(&twice).map(|(a, b)| a - b).collect();
        assert!(max_abs(&diff) <= 1e-10, "subdomain {k}: {}", max_abs(&diff));
        // range is spanned by φ's, supported on the closed subdomain
        let nodes = &aux.spectra[k].nodes;
        assert!(once.iter().enumerate().all(|(p, &x)| x == 0.0 || nodes.contains(&p)));
    }
}

#[test]
fn ms_variational_residual() {
    for (n, seed) in [(2, 5), (3, 5)] {
        let s = Setup::new(n, 4, 1, log_uniform(1.0, 1e6, seed));
        let aux = s.aux(ms_lambda(4));
        let forms = s.forms(&aux);
        let i = 0;
        let region = build_oversampled(&s.mesh, &s.part, i, 1).unwrap();
        let psi = build_ms_basis(i, 0, &region, &forms).unwrap();
        let support: Vec<usize> = region.free_nodes.iter().map(|&p| s.dofs.index[p].unwrap()).collect();
        assert!(psi.iter().enumerate().all(|(a, &x)| x == 0.0 || support.contains(&a)));
        for (c, r) in random_vectors(50, support.len(), 77).into_iter().enumerate() {
            let mut v = vec![0.0; s.dofs.num_free()];
            for (&a, x) in support.iter().zip(r) {
                v[a] = x;
            }
            let res = residual(&forms, i, 0, &psi, &v);
            assert!(res <= 1e-9, "n={n} test vector {c}: {res:e}");
        }
    }
}

#[test]
fn glb_variational_residual() {
    let s = Setup::new(2, 4, 1, unit());
    let aux = s.aux(ms_lambda(4));
    let forms = s.forms(&aux);
    for (i, j) in [(0, 0), (3, aux.count(3) - 1)] {
        let psi = build_glb_basis(i, j, &forms).unwrap();
        for a in 0..s.dofs.num_free() {
            let mut e = vec![0.0; s.dofs.num_free()];
            e[a] = 1.0;
            let lhs = forms.relaxed_bilinear(&psi, &e);
            let rhs = forms.functional(i, j).dot(&e);
            assert!((lhs - rhs).abs() <= 1e-10 * max_abs(&psi).max(1.0), "({i},{j}) coordinate {a}");
        }
    }
}

#[test]
fn ms_with_full_oversampling_equals_glb() {
    for spec in [unit(), log_uniform(1.0, 1e6, 2)] {
        let s = Setup::new(2, 4, 1, spec);
        let aux = s.aux(ms_lambda(4));
        let forms = s.forms(&aux);
        let glb = build_glb_all(&forms).unwrap();
        let ms = build_coarse_space(CoarseKind::Ms { k: 2 }, &forms).unwrap();
        assert_eq!(ms.len(), glb.len());
        for (row, g) in ms.rows.iter().zip(&glb) {
            let d = row.to_dense(s.dofs.num_free());
            let diff: Vec<f64> = d.iter().zip(g).map(|(a, b)| a - b).collect();
            assert!(max_abs(&diff) <= 1e-8 * max_abs(g), "{}", max_abs(&diff) / max_abs(g));
        }
    }
}

#[test]
fn coarse_matrices_are_spd() {
    let s = Setup::new(3, 4, 1, log_uniform(1.0, 1e6, 7));
    let aux = s.aux(ms_lambda(4));
    let forms = s.forms(&aux);
    let t = emschwarz_core::spectral::Threshold::new(1.0 + 6f64.log2());
    let galvis = emschwarz_core::spectral::build_galvis_coarse(&s.mesh, &s.rho, &s.part, &s.pou, t).unwrap();
    for space in [
        build_coarse_space(CoarseKind::Ms { k: 1 }, &forms).unwrap(),
        build_coarse_space(CoarseKind::Glb, &forms).unwrap(),
        galvis,
    ] {
        let p = space.len();
        let g = DMatrix::from_row_slice(p, p, &space.galerkin_dense(&s.a));
        assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        let ev = g.symmetric_eigenvalues();
        assert!(ev.min() > 1e-10 * ev.max(), "{}: {}", space.kind, ev.min() / ev.max());
    }
}

#[test]
fn glb_tail_decays_geometrically() {
    let s = Setup::new(6, 10, 1, unit());
    let aux = s.aux(ms_lambda(10));
    let forms = s.forms(&aux);
    let glb = build_glb_all(&forms).unwrap();
    for i in [0, 3, 8, 14, 21] {
        let psi = &glb[aux.spectra[..i].iter().map(|sp| sp.selected()).sum::<usize>()];
        let prof = decay_profile(psi, i, &forms);
        let total = s.a.quad_form(psi)
            + (0..s.part.num_subdomains())
                .map(|l| (0..aux.count(l)).map(|j| forms.functional(l, j).dot(psi).powi(2)).sum::<f64>())
                .sum::<f64>();
        assert!(prof[0].tail() <= total * (1.0 + 1e-12));
        assert_eq!(prof[s.part.n].tail(), 0.0);
        for k in 0..prof.len() {
            if k + 1 < prof.len() {
                assert!(prof[k + 1].tail() <= prof[k].tail() * (1.0 + 1e-12));
            }
            let next = prof.get(k + 2).map_or(0.0, |e| e.tail());
            if prof[k].tail() > 1e-12 {
                assert!(next <= 0.9 * prof[k].tail(), "subdomain {i}, k={k}: {next:e} vs {:e}", prof[k].tail());
            }
        }
    }
}

#[test]
fn localization_error_decreases_with_oversampling() {
    let s = Setup::new(6, 10, 1, unit());
    let aux = s.aux(ms_lambda(10));
    let forms = s.forms(&aux);
    let glb = build_glb_all(&forms).unwrap();
    for i in [0, 14] {
        let off: usize = aux.spectra[..i].iter().map(|sp| sp.selected()).sum();
        let errs: Vec<f64> = (1..=s.part.n)
            .map(|k| {
                let region = build_oversampled(&s.mesh, &s.part, i, k).unwrap();
                let rows = build_ms_subdomain(&region, &forms).unwrap();
                (0..rows.len())
                    .map(|j| {
                        let d: Vec<f64> =
                            rows[j].to_dense(s.dofs.num_free()).iter().zip(&glb[off + j]).map(|(a, b)| a - b).collect();
                        s.a.quad_form(&d) / s.a.quad_form(&glb[off + j])
                    })
                    .fold(0.0f64, f64::max)
                    .sqrt()
            })
            .collect();
        for w in errs.windows(2) {
            if w[0] > 1e-10 {
                assert!(w[1] <= 0.9 * w[0], "subdomain {i}: {errs:?}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projection_reproduces_aux_vectors(seed in 0u64..500) {
        let s = Setup::new(2, 4, 1, log_uniform(1e-3, 1e3, seed));
        let aux = s.aux(ms_lambda(4));
        for k in 0..4 {
            for j in 0..aux.count(k) {
                let phi = aux.vector_full(k, j, s.mesh.num_nodes());
                let (c, img) = apply_pi(&aux, k, &phi);
                prop_assert!((c[j] - 1.0).abs() < 1e-10);
                let diff: Vec<f64> = img.iter().zip(&phi).map(|(a, b)| a - b).collect();
                prop_assert!(max_abs(&diff) <= 1e-10 * max_abs(&phi));
            }
        }
    }
}
