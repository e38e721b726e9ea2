#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sttopo_core::optimizer::{ObjectiveConfig, ProblemSetup, SpaceTimeProblem};
use sttopo_core::{DesignMode, ProblemDefinition, SolverConfig, SpaceTimeMesh};

/// Small problem with tolerances tight enough for finite differences.
pub fn tight_problem(example: u8, mode: DesignMode, dims: (usize, usize)) -> SpaceTimeProblem {
    let problem = match example {
        1 => ProblemDefinition::example1(),
        _ => ProblemDefinition::example2(),
    };
    let mesh = SpaceTimeMesh::with_tau(dims.0, dims.0, dims.1, problem.tau).unwrap();
    let mut setup = ProblemSetup::new(mesh, problem);
    setup.mode = mode;
    setup.filter.rtol = 1e-12;
    setup.solver = SolverConfig {
        outer_rtol: 1e-11,
        ..SolverConfig::default()
    };
    SpaceTimeProblem::new(setup, ObjectiveConfig::default()).unwrap()
}

pub fn random_design(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count.min(n) {
        let i = rng.gen_range(0..n);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}
