//! Shared fixtures for the kernel benchmarks.

use sttopo_core::design::interpolate;
use sttopo_core::{Assembler, MaterialSet, ProblemDefinition, SpaceTimeMesh, SparseMatrix};

/// Ex1 mesh of `n x n x 2n` elements with tau-consistent spacing.
pub fn ex1_mesh(n: usize) -> SpaceTimeMesh {
    SpaceTimeMesh::with_tau(n, n, 2 * n, ProblemDefinition::example1().tau).expect("valid mesh")
}

/// Per-element coefficients for a smooth design field with values in (0, 1).
pub fn coefficients(mesh: &SpaceTimeMesh) -> (Vec<f64>, Vec<f64>) {
    let m = MaterialSet::default();
    (0..mesh.num_elements())
        .map(|e| {
            let g = 0.5 + 0.4 * (e as f64 * 0.37).sin();
            let i = interpolate(g, &m).expect("design in range");
            (i.c, i.k)
        })
        .unzip()
}

/// Assembled system operator for the smooth design on `mesh`.
pub fn system(mesh: SpaceTimeMesh) -> SparseMatrix {
    let (c, k) = coefficients(&mesh);
    Assembler::new(mesh).system(&c, &k).expect("assembly")
}

/// Deterministic vector of length `n` with entries in [-1, 1].
pub fn vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.61).cos()).collect()
}
