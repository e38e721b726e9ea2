//! Backward-Euler time stepping on the spatial mesh with bilinear quadrilaterals.
//!
//! Independent of the space-time assembly and multigrid code: element
//! matrices come from closed-form 1D blocks and every step is solved with
//! Jacobi-preconditioned CG.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{spatial_dirichlet_mask, ProblemDefinition};
use crate::design::interpolate;
use crate::error::{check_len, Error, Result};
use crate::linalg::vector::axpy;
use crate::linalg::{cg_jacobi, inverse_diagonal, SparseMatrix};
use crate::mesh::MaterialSet;
use crate::optimizer::p_norm;

/// Relative tolerance of the per-step CG solves.
pub const TS_RTOL: f64 = 1e-10;
const TS_MAXIT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSteppingConfig {
    pub nx: usize,
    pub ny: usize,
    pub n_steps: usize,
    pub problem: ProblemDefinition,
    pub materials: MaterialSet,
}

impl TimeSteppingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.nx < 2 || self.ny < 2 {
            errs.push(format!("time stepping: need at least 2 elements per direction, got {}x{}", self.nx, self.ny));
        }
        if self.nx != self.ny {
            errs.push(format!("time stepping: square elements need nx = ny, got {}x{}", self.nx, self.ny));
        }
        if self.n_steps < 1 {
            errs.push("time stepping: need at least one step".to_string());
        }
        if let Err(Error::Config(v)) = self.materials.validate() {
            errs.extend(v);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsSolution {
    /// Nodal temperature after the last step.
    pub final_field: Vec<f64>,
    /// Nodal temperature at every time level including `T^0`, when requested.
    pub history: Option<Vec<Vec<f64>>>,
    /// p-norm over `(element, step)` averages; each average spans the four nodes at both ends of the step.
    pub phi: f64,
    pub cg_iterations: usize,
    pub wall_seconds: f64,
}

type Mat4 = [[f64; 4]; 4];

/// Consistent mass and stiffness of a square bilinear element of side `h`.
fn quad_matrices(h: f64) -> (Mat4, Mat4) {
    let m1 = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    let k1 = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    let mut m = [[0.0; 4]; 4];
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let (ai, aj, bi, bj) = (a & 1, a >> 1, b & 1, b >> 1);
            m[a][b] = m1[ai][bi] * m1[aj][bj];
            k[a][b] = k1[ai][bi] * m1[aj][bj] + m1[ai][bi] * k1[aj][bj];
        }
    }
    (m, k)
}

struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
}

impl Grid {
    fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }
    fn num_elements(&self) -> usize {
        self.nx * self.ny
    }
    fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.nx, e / self.nx);
        let n0 = j * (self.nx + 1) + i;
        [n0, n0 + 1, n0 + self.nx + 1, n0 + self.nx + 2]
    }
}

fn assemble(grid: &Grid, local: impl Fn(usize) -> Mat4) -> Result<SparseMatrix> {
    let mut t = Vec::with_capacity(grid.num_elements() * 16);
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        let a = local(e);
        for r in 0..4 {
            for c in 0..4 {
                t.push((nodes[r], nodes[c], a[r][c]));
            }
        }
    }
    let n = grid.num_nodes();
    SparseMatrix::from_triplets(n, n, &t)
}

/// Load vector at rescaled time `t` by 2x2 Gauss quadrature.
fn load(grid: &Grid, problem: &ProblemDefinition, t: f64) -> Vec<f64> {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let h = grid.h;
    let mut f = vec![0.0; grid.num_nodes()];
    for e in 0..grid.num_elements() {
        let (i, j) = ((e % grid.nx) as f64, (e / grid.nx) as f64);
        let nodes = grid.element_nodes(e);
        for &sy in &pts {
            for &sx in &pts {
                let q = problem.source_at((i + sx) * h, (j + sy) * h, t) * h * h / 4.0;
                let n = [(1.0 - sx) * (1.0 - sy), sx * (1.0 - sy), (1.0 - sx) * sy, sx * sy];
                for a in 0..4 {
                    f[nodes[a]] += q * n[a];
                }
            }
        }
    }
    f
}

/// Marches `(M(C)/dt + K(k)) T^{n+1} = M(C)/dt T^n + f^{n+1}` from `T^0 = 0` over rescaled time `[0, 1]`.
/// `gamma_bar` holds one projected density per spatial element.
pub fn ts_forward(config: &TimeSteppingConfig, gamma_bar: &[f64], p: u32, keep_history: bool) -> Result<TsSolution> {
    config.validate()?;
    let start = Instant::now();
    let grid = Grid {
        nx: config.nx,
        ny: config.ny,
        h: 1.0 / config.nx as f64,
    };
    check_len("time-stepping design", grid.num_elements(), gamma_bar.len())?;
    let coeff = gamma_bar
        .iter()
        .map(|&g| interpolate(g, &config.materials))
        .collect::<Result<Vec<_>>>()?;
    let dt = 1.0 / config.n_steps as f64;
    let (m0, k0) = quad_matrices(grid.h);
    let mass = assemble(&grid, |e| m0.map(|r| r.map(|v| v * coeff[e].c / dt)))?;
    let mut system = assemble(&grid, |e| {
        let mut a = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] = m0[r][c] * coeff[e].c / dt + k0[r][c] * coeff[e].k;
            }
        }
        a
    })?;
    let fixed = spatial_dirichlet_mask(grid.nx, grid.ny, &config.problem.boundary);
    system.constrain_symmetric(&fixed)?;
    let inv_diag = inverse_diagonal(&system)?;

    let n = grid.num_nodes();
    let mut t_cur = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut history = keep_history.then(|| vec![t_cur.clone()]);
    let mut averages = Vec::with_capacity(grid.num_elements() * config.n_steps);
    let mut cg_iterations = 0;
    for step in 1..=config.n_steps {
        mass.mul_into(&t_cur, &mut rhs);
        axpy(1.0, &load(&grid, &config.problem, step as f64 * dt), &mut rhs);
        for (r, &f) in rhs.iter_mut().zip(&fixed) {
            if f {
                *r = 0.0;
            }
        }
        let mut t_next = t_cur.clone();
        let out = cg_jacobi(&system, &inv_diag, &rhs, &mut t_next, TS_RTOL, TS_MAXIT)?;
        if !out.converged {
            return Err(Error::NotConverged {
                solver: "time-stepping cg",
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        cg_iterations += out.iterations;
        averages.extend((0..grid.num_elements()).into_par_iter().map(|e| {
            grid.element_nodes(e)
                .iter()
                .map(|&v| t_cur[v] + t_next[v])
                .sum::<f64>()
                / 8.0
        }).collect::<Vec<_>>());
        t_cur = t_next;
        if let Some(h) = history.as_mut() {
            h.push(t_cur.clone());
        }
    }
    let (phi, _) = p_norm(&averages, p)?;
    Ok(TsSolution {
        final_field: t_cur,
        history,
        phi,
        cg_iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Diffusion timescale and element Fourier number of one material phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseDiagnostics {
    /// `C L^2 / k` in physical time units.
    pub tau_diff: f64,
    /// `k_tilde dt / (C dx^2)` on the rescaled mesh.
    pub fourier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionDiagnostics {
    pub conductive: PhaseDiagnostics,
    pub insulative: PhaseDiagnostics,
}

pub fn diffusion_diagnostics(materials: &MaterialSet, dx: f64, dt: f64) -> Result<DiffusionDiagnostics> {
    if !(dx > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("element sizes must be positive, got dx={dx} dt={dt}")));
    }
    materials.validate()?;
    let l2 = materials.length * materials.length;
    let phase = |c: f64, k: f64, kt: f64| PhaseDiagnostics {
        tau_diff: c * l2 / k,
        fourier: kt * dt / (c * dx * dx),
    };
    Ok(DiffusionDiagnostics {
        conductive: phase(materials.c_con, materials.k_con, materials.k_tilde_con()),
        insulative: phase(materials.c_ins, materials.k_ins, materials.k_tilde_ins()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{BoundaryKind, HeatSource};

    fn config(nx: usize, steps: usize, problem: ProblemDefinition) -> TimeSteppingConfig {
        TimeSteppingConfig {
            nx,
            ny: nx,
            n_steps: steps,
            problem,
            materials: MaterialSet::default().with_tau(problem.tau),
        }
    }

    #[test]
    fn zero_source_stays_zero() {
        let problem = ProblemDefinition {
            source: HeatSource::Uniform { q: 0.0 },
            ..ProblemDefinition::example1()
        };
        let sol = ts_forward(&config(4, 5, problem), &[0.5; 16], 20, true).unwrap();
        assert!(sol.history.unwrap().iter().flatten().all(|v| *v == 0.0));
        assert_eq!(sol.phi, 0.0);
    }

    #[test]
    fn insulated_uniform_heating_follows_scalar_recurrence() {
        // With no spatial constraint and uniform data the field stays uniform and
        // each step is C/dt T^{n+1} = C/dt T^n + q, so T^n = n q dt / C.
        let problem = ProblemDefinition {
            source: HeatSource::Uniform { q: 2.0 },
            boundary: BoundaryKind::Insulated,
            tau: 1.0,
        };
        let gamma = 0.7;
        let c = interpolate(gamma, &MaterialSet::default()).unwrap().c;
        let sol = ts_forward(&config(3, 7, problem), &[gamma; 9], 20, true).unwrap();
        for (n, field) in sol.history.unwrap().iter().enumerate() {
            let exact = n as f64 * 2.0 / 7.0 / c;
            assert!(field.iter().all(|v| (v - exact).abs() < 1e-12 * exact.max(1.0)));
        }
    }

    #[test]
    fn lumped_decay_matches_closed_form_recurrence() {
        // 2x2 mesh with every node but the centre held at zero: the centre node obeys
        // (m/dt + k) T^{n+1} = m/dt T^n + f, a scalar backward-Euler recurrence.
        let problem = ProblemDefinition {
            source: HeatSource::Uniform { q: 3.0 },
            boundary: BoundaryKind::AllSides,
            tau: 1.0,
        };
        let cfg = config(2, 9, problem);
        let mat = interpolate(0.4, &cfg.materials).unwrap();
        let h = 0.5;
        // Centre node collects the (3,3)-type diagonal entries of four elements.
        let m = 4.0 * mat.c * h * h / 9.0;
        let k = 4.0 * mat.k * (2.0 / 3.0);
        let f = 4.0 * 3.0 * h * h / 4.0;
        let dt = 1.0 / 9.0;
        let sol = ts_forward(&cfg, &[0.4; 4], 20, true).unwrap();
        let mut t = 0.0;
        for field in sol.history.unwrap().iter().skip(1) {
            t = (m / dt * t + f) / (m / dt + k);
            assert!((field[4] - t).abs() < 1e-12 * t);
        }
    }

    #[test]
    fn constant_source_reaches_discrete_steady_state() {
        let problem = ProblemDefinition {
            source: HeatSource::Uniform { q: 1.0 },
            boundary: BoundaryKind::AllSides,
            tau: 1.0,
        };
        // Long horizon: tau = 20 physical time units compared with C L^2 / k = 1/6 for the solid.
        let cfg = TimeSteppingConfig {
            materials: MaterialSet::default().with_tau(20.0),
            ..config(6, 400, ProblemDefinition { tau: 20.0, ..problem })
        };
        let sol = ts_forward(&cfg, &[1.0; 36], 20, false).unwrap();
        // Steady solve K T = f with the same constraints.
        let grid = Grid { nx: 6, ny: 6, h: 1.0 / 6.0 };
        let (_, k0) = quad_matrices(grid.h);
        let kt = cfg.materials.k_tilde_con();
        let mut kmat = assemble(&grid, |_| k0.map(|r| r.map(|v| v * kt))).unwrap();
        let fixed = spatial_dirichlet_mask(6, 6, &BoundaryKind::AllSides);
        kmat.constrain_symmetric(&fixed).unwrap();
        let mut f = load(&grid, &cfg.problem, 1.0);
        for (v, &c) in f.iter_mut().zip(&fixed) {
            if c {
                *v = 0.0;
            }
        }
        let mut steady = vec![0.0; f.len()];
        cg_jacobi(&kmat, &inverse_diagonal(&kmat).unwrap(), &f, &mut steady, 1e-13, 1000).unwrap();
        for (a, b) in sol.final_field.iter().zip(&steady) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_source_bounded_for_any_step() {
        let problem = ProblemDefinition {
            source: HeatSource::Uniform { q: 0.0 },
            ..ProblemDefinition::example2()
        };
        for steps in [1, 3, 50] {
            let sol = ts_forward(&config(4, steps, problem), &[0.2; 16], 20, false).unwrap();
            assert!(sol.final_field.iter().all(|v| v.is_finite() && *v == 0.0));
        }
    }

    #[test]
    fn diffusion_timescales() {
        let base = MaterialSet::default();
        let d = diffusion_diagnostics(&base, 0.1, 0.1).unwrap();
        assert!((d.conductive.tau_diff - 1.0 / 3.0).abs() < 1e-15);
        let c = diffusion_diagnostics(&MaterialSet { k_con: 10.0, ..base }, 0.1, 0.1).unwrap();
        assert!((c.conductive.tau_diff - 0.1).abs() < 1e-15);
        let high = diffusion_diagnostics(&MaterialSet { c_con: 100.0, ..base }, 0.1, 0.1).unwrap();
        assert!((high.conductive.tau_diff - 100.0 / 3.0).abs() < 1e-12);
        // Fourier number k dt / (C dx^2) = 3 * 0.1 / 0.01.
        assert!((d.conductive.fourier - 30.0).abs() < 1e-12);
    }
}
