#![allow(dead_code)]

use emschwarz_core::coarse::EnergyForms;
use emschwarz_core::fem::{assemble_stiffness, DofMap};
use emschwarz_core::mesh::{build_mesh, sample_coefficient, CoefficientField, CoefficientSpec, Mesh};
use emschwarz_core::partition::{build_partition, build_pou, DomainPartition, PartitionOfUnity};
use emschwarz_core::sparse::SparseSymMatrix;
use emschwarz_core::spectral::{build_aux_space, AuxSpace, Threshold};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub mesh: Mesh,
    pub rho: CoefficientField,
    pub part: DomainPartition,
    pub pou: PartitionOfUnity,
    pub dofs: DofMap,
    pub a: SparseSymMatrix,
}

impl Setup {
    pub fn new(n: usize, m: usize, d: usize, rho: CoefficientSpec) -> Self {
        let mesh = build_mesh(n, m).unwrap();
        let rho = sample_coefficient(&mesh, &rho).unwrap();
        let part = build_partition(&mesh, d).unwrap();
        let pou = build_pou(&mesh, &part).unwrap();
        let dofs = DofMap::new(&mesh);
        let a = assemble_stiffness(&mesh, &rho).unwrap();
        Self { mesh, rho, part, pou, dofs, a }
    }

    pub fn aux(&self, lambda: f64) -> AuxSpace {
        build_aux_space(&self.mesh, &self.rho, &self.part, &self.pou, Threshold::new(lambda)).unwrap()
    }

    pub fn forms<'a>(&'a self, aux: &'a AuxSpace) -> EnergyForms<'a> {
        EnergyForms::new(&self.mesh, &self.rho, &self.part, &self.dofs, &self.a, aux)
    }
}

pub fn unit() -> CoefficientSpec {
    CoefficientSpec::Constant { value: 1.0 }
}

pub fn log_uniform(lo: f64, hi: f64, seed: u64) -> CoefficientSpec {
    CoefficientSpec::LogUniform { lo, hi, seed }
}

/// 1 + log₂ m, the default multiscale threshold.
pub fn ms_lambda(m: usize) -> f64 {
    1.0 + (m as f64).log2()
}

pub fn random_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_nalgebra(a: &SparseSymMatrix) -> nalgebra::DMatrix<f64> {
    let n = a.dim();
    nalgebra::DMatrix::from_row_slice(n, n, &a.to_dense())
}
