mod common;

use nalgebra::{DMatrix, DVector};
use sttopo_core::linalg::{fgmres, Jacobi, Multigrid};
use sttopo_core::optimizer::{ObjectiveConfig, ProblemSetup, SpaceTimeProblem};
use sttopo_core::{
    CoarseningStrategy, DesignMode, LevelCount, ProblemDefinition, SolverConfig, SpaceTimeMesh, SparseMatrix,
};

use common::{random_design, tight_problem};

fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), &a.to_dense())
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn oracle_case(example: u8, mode: DesignMode, seed: u64) {
    let mut problem = tight_problem(example, mode, (6, 8));
    problem.solver_config_mut().outer_rtol = 1e-10;
    let gamma = random_design(problem.num_design_variables(), 0.0, 1.0, seed);
    let design = problem.pipeline().forward(&gamma).unwrap();
    let (j, f) = problem.system(&design.gamma_bar).unwrap();
    let jd = dense(&j);
    let lu = jd.clone().lu();
    let exact = lu.solve(&DVector::from_column_slice(&f)).unwrap();

    let config = SolverConfig {
        outer_rtol: 1e-10,
        ..SolverConfig::default()
    };
    let mut mg = Multigrid::new(j, problem.hierarchy(), config).unwrap();
    let mut x = vec![0.0; f.len()];
    let stats = mg.solve(&f, &mut x).unwrap();
    assert!(stats.converged);
    let err = rel_l2(&x, exact.as_slice());
    assert!(err <= 1e-8, "example {example} {mode:?}: state error {err:e}");

    // Adjoint right-hand side with zeros on the constrained rows, as in the sensitivity solve.
    let mut rhs = random_design(f.len(), -1.0, 1.0, seed + 100);
    for &n in problem.dirichlet_nodes() {
        rhs[n] = 0.0;
    }
    let exact_t = jd.transpose().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
    let mut mgt = mg.transposed().unwrap();
    let mut y = vec![0.0; rhs.len()];
    assert!(mgt.solve(&rhs, &mut y).unwrap().converged);
    let err_t = rel_l2(&y, exact_t.as_slice());
    assert!(err_t <= 1e-8, "example {example} {mode:?}: adjoint error {err_t:e}");
}

#[test]
fn multigrid_fgmres_matches_dense_solve() {
    oracle_case(1, DesignMode::TimeConstant, 1);
    oracle_case(1, DesignMode::SpaceTime, 2);
    oracle_case(2, DesignMode::TimeConstant, 3);
    oracle_case(2, DesignMode::SpaceTime, 4);
}

#[test]
fn dirichlet_rows_hold_prescribed_zero() {
    let mut problem = tight_problem(1, DesignMode::TimeConstant, (8, 8));
    let gamma = random_design(problem.num_design_variables(), 0.0, 1.0, 9);
    let s = problem.solve_state(&gamma).unwrap();
    let max = s.state.iter().cloned().fold(0.0f64, f64::max);
    for &n in problem.dirichlet_nodes() {
        assert!(s.state[n].abs() <= 1e-10 * max, "node {n}: {}", s.state[n]);
    }
    // A nonnegative source with zero boundary values gives a nonnegative field up to solver tolerance.
    assert!(s.state.iter().all(|&v| v > -1e-6 * max));
}

#[test]
fn warm_and_cold_start_agree() {
    let mut problem = tight_problem(2, DesignMode::SpaceTime, (8, 8));
    let n = problem.num_design_variables();
    let a = random_design(n, 0.2, 0.8, 5);
    let b: Vec<f64> = a.iter().map(|v| v + 0.05).collect();
    problem.evaluate(&a, true).unwrap();
    let warm = problem.evaluate(&b, true).unwrap();
    problem.set_warm_start(false);
    let cold = problem.evaluate(&b, true).unwrap();
    assert!(((warm.phi - cold.phi) / cold.phi).abs() < 1e-9);
    let gw = warm.dphi.unwrap();
    let gc = cold.dphi.unwrap();
    assert!(rel_l2(&gw, &gc) < 1e-7);
}

fn uniform_problem(n: usize, nt: usize, strategy: CoarseningStrategy) -> SpaceTimeProblem {
    let problem = ProblemDefinition::example1();
    let mesh = SpaceTimeMesh::with_tau(n, n, nt, problem.tau).unwrap();
    let mut setup = ProblemSetup::new(mesh, problem);
    setup.strategy = strategy;
    setup.levels = LevelCount::Auto;
    SpaceTimeProblem::new(setup, ObjectiveConfig::default()).unwrap()
}

#[test]
fn one_vcycle_halves_the_residual() {
    let problem = uniform_problem(32, 64, CoarseningStrategy::Semi);
    let n = problem.mesh().num_elements();
    let (j, _) = problem.system(&vec![0.3; n]).unwrap();
    let mut mg = Multigrid::new(j.clone(), problem.hierarchy(), SolverConfig::default()).unwrap();
    let mut r = random_design(j.nrows(), -1.0, 1.0, 21);
    for &d in problem.dirichlet_nodes() {
        r[d] = 0.0;
    }
    let mut z = vec![0.0; r.len()];
    mg.vcycle(&r, &mut z).unwrap();
    let jz = j.spmv(&z).unwrap();
    let after: f64 = r.iter().zip(&jz).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let before: f64 = r.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(after <= 0.5 * before, "reduction {}", after / before);
}

#[test]
fn vcycle_beats_jacobi_and_gives_same_solution() {
    let problem = uniform_problem(16, 32, CoarseningStrategy::Semi);
    let n = problem.mesh().num_elements();
    let (j, f) = problem.system(&vec![0.3; n]).unwrap();
    let config = SolverConfig::default();
    let mut mg = Multigrid::new(j.clone(), problem.hierarchy(), config).unwrap();
    let mut x_mg = vec![0.0; f.len()];
    let s_mg = mg.solve(&f, &mut x_mg).unwrap();

    let mut jac = Jacobi::new(&j).unwrap();
    let mut x_j = vec![0.0; f.len()];
    let s_j = fgmres(&j, &f, &mut x_j, &mut jac, config.outer_rtol, 2000, 2000).unwrap();
    assert!(s_mg.converged && s_j.converged);
    assert!(s_mg.outer_iterations * 5 < s_j.outer_iterations, "{} vs {}", s_mg.outer_iterations, s_j.outer_iterations);
    assert!(rel_l2(&x_mg, &x_j) < 1e-4);
}

#[test]
fn outer_iterations_stay_flat_on_small_meshes() {
    for (n, nt) in [(16, 32), (32, 64)] {
        let mut problem = uniform_problem(n, nt, CoarseningStrategy::Semi);
        let ne = problem.mesh().num_elements();
        let (_, stats) = problem.solve_physical(&vec![0.3; ne]).unwrap();
        assert!(stats.outer_iterations <= 15, "{n}x{n}x{nt}: {}", stats.outer_iterations);
        let h = &stats.residual_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
