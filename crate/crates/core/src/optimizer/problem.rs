//! One design evaluation: pipeline, state solve, objective, adjoint solve and
//! the chain rule back to the design variables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{objective, volume_constraint};
use crate::assembly::{apply_dirichlet, dirichlet_set, element_values, Assembler, ProblemDefinition};
use crate::design::{interpolate, DesignMode, DesignPipeline, DesignState, FilterConfig, Interpolated};
use crate::error::{check_len, Error, Result};
use crate::hierarchy::{build_hierarchy, CoarseningStrategy, Hierarchy, LevelCount, DEFAULT_LAMBDA_CRIT};
use crate::linalg::{Multigrid, SolverConfig, SolverStats, SparseMatrix};
use crate::mesh::{MaterialSet, SpaceTimeMesh};

/// Everything that fixes the discrete state problem and its design parametrisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub mesh: SpaceTimeMesh,
    pub materials: MaterialSet,
    pub problem: ProblemDefinition,
    pub mode: DesignMode,
    pub filter: FilterConfig,
    pub solver: SolverConfig,
    pub levels: LevelCount,
    pub strategy: CoarseningStrategy,
    pub lambda_crit: f64,
}

impl ProblemSetup {
    /// Defaults for the given mesh and problem; the material set takes the problem's final time.
    pub fn new(mesh: SpaceTimeMesh, problem: ProblemDefinition) -> Self {
        Self {
            mesh,
            materials: MaterialSet::default().with_tau(problem.tau),
            problem,
            mode: DesignMode::TimeConstant,
            filter: FilterConfig::default(),
            solver: SolverConfig::default(),
            levels: LevelCount::Auto,
            strategy: CoarseningStrategy::Semi,
            lambda_crit: DEFAULT_LAMBDA_CRIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for r in [self.materials.validate(), self.filter.validate(), self.solver.validate()] {
            if let Err(e) = r {
                match e {
                    Error::Config(v) => errs.extend(v),
                    other => errs.push(other.to_string()),
                }
            }
        }
        let (tm, tp, tk) = (self.mesh.tau(), self.problem.tau, self.materials.tau);
        if tm != tp || tm != tk {
            errs.push(format!(
                "final time must agree across mesh ({tm}), problem ({tp}) and materials ({tk})"
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Objective and constraint parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub p: u32,
    pub volume_fraction: f64,
    /// Evaluate the volume constraint on the projected field instead of the raw design.
    pub volume_on_physical: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            p: 20,
            volume_fraction: 0.3,
            volume_on_physical: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.p < 1 {
            errs.push("objective.p must be >= 1".to_string());
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            errs.push(format!(
                "objective.volume_fraction must lie in (0, 1), got {}",
                self.volume_fraction
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Result of a forward solve.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub design: DesignState,
    pub state: Vec<f64>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub design: DesignState,
    pub state: Vec<f64>,
    pub phi: f64,
    pub chi: f64,
    pub state_stats: SolverStats,
    /// Present when the gradient was requested.
    pub adjoint_stats: Option<SolverStats>,
    pub dphi: Option<Vec<f64>>,
    pub dchi: Option<Vec<f64>>,
}

/// Reusable evaluator. The previous state and adjoint are kept as warm starts.
#[derive(Debug, Clone)]
pub struct SpaceTimeProblem {
    setup: ProblemSetup,
    objective: ObjectiveConfig,
    assembler: Assembler,
    pipeline: DesignPipeline,
    hierarchy: Hierarchy,
    fixed: Vec<usize>,
    load: Vec<f64>,
    state_guess: Vec<f64>,
    adjoint_guess: Vec<f64>,
    warm_start: bool,
    stabilization_sensitivity: bool,
}

impl SpaceTimeProblem {
    pub fn new(setup: ProblemSetup, objective: ObjectiveConfig) -> Result<Self> {
        setup.validate()?;
        objective.validate()?;
        let assembler = Assembler::new(setup.mesh);
        let pipeline = DesignPipeline::new(&assembler, setup.mode, &setup.filter)?;
        let hierarchy = build_hierarchy(
            &setup.mesh,
            &setup.materials,
            setup.levels,
            setup.lambda_crit,
            setup.strategy,
        )?;
        let fixed = dirichlet_set(&setup.mesh, &setup.problem);
        let load = assembler.source(&setup.problem)?;
        let n = setup.mesh.num_nodes();
        Ok(Self {
            setup,
            objective,
            assembler,
            pipeline,
            hierarchy,
            fixed,
            load,
            state_guess: vec![0.0; n],
            adjoint_guess: vec![0.0; n],
            warm_start: true,
            stabilization_sensitivity: true,
        })
    }

    pub fn setup(&self) -> &ProblemSetup {
        &self.setup
    }
    pub fn objective_config(&self) -> &ObjectiveConfig {
        &self.objective
    }
    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.setup.mesh
    }
    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }
    pub fn pipeline(&self) -> &DesignPipeline {
        &self.pipeline
    }
    pub fn pipeline_mut(&mut self) -> &mut DesignPipeline {
        &mut self.pipeline
    }
    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }
    pub fn solver_config_mut(&mut self) -> &mut SolverConfig {
        &mut self.setup.solver
    }
    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.fixed
    }
    pub fn num_design_variables(&self) -> usize {
        self.pipeline.num_design_variables()
    }

    /// When off, every solve starts from zero.
    pub fn set_warm_start(&mut self, on: bool) {
        self.warm_start = on;
        if !on {
            self.state_guess.iter_mut().for_each(|v| *v = 0.0);
            self.adjoint_guess.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Whether the design dependence of the time-direction artificial diffusion enters the gradient.
    /// Disabling it gives a deliberately inconsistent gradient.
    pub fn set_stabilization_sensitivity(&mut self, on: bool) {
        self.stabilization_sensitivity = on;
    }

    fn coefficients(&self, gamma_bar: &[f64]) -> Result<Vec<Interpolated>> {
        gamma_bar
            .par_iter()
            .map(|&g| interpolate(g, &self.setup.materials))
            .collect()
    }

    /// Constrained system matrix and load vector for a physical (projected) element field.
    pub fn system(&self, gamma_bar: &[f64]) -> Result<(SparseMatrix, Vec<f64>)> {
        check_len("physical density field", self.setup.mesh.num_elements(), gamma_bar.len())?;
        let coeff = self.coefficients(gamma_bar)?;
        let c: Vec<f64> = coeff.iter().map(|m| m.c).collect();
        let k: Vec<f64> = coeff.iter().map(|m| m.k).collect();
        let mut j = self.assembler.system(&c, &k)?;
        let mut f = self.load.clone();
        apply_dirichlet(&mut j, &mut f, &self.fixed)?;
        Ok((j, f))
    }

    fn solve_with(&mut self, mg: &mut Multigrid, rhs: &[f64], adjoint: bool) -> Result<(Vec<f64>, SolverStats)> {
        let guess = if adjoint { &self.adjoint_guess } else { &self.state_guess };
        let mut x = if self.warm_start {
            guess.clone()
        } else {
            vec![0.0; rhs.len()]
        };
        let stats = mg.solve(rhs, &mut x)?;
        if !stats.converged {
            return Err(Error::NotConverged {
                solver: if adjoint { "adjoint fgmres" } else { "state fgmres" },
                iterations: stats.outer_iterations,
                residual: stats.final_relative_residual,
            });
        }
        if self.warm_start {
            if adjoint {
                self.adjoint_guess.copy_from_slice(&x);
            } else {
                self.state_guess.copy_from_slice(&x);
            }
        }
        Ok((x, stats))
    }

    /// Design pipeline and state solve only.
    pub fn solve_state(&mut self, gamma: &[f64]) -> Result<StateSolution> {
        let design = self.pipeline.forward(gamma)?;
        let (state, stats) = self.solve_physical(&design.gamma_bar)?;
        Ok(StateSolution { design, state, stats })
    }

    /// State solve for a prescribed physical field, bypassing filter and projection.
    pub fn solve_physical(&mut self, gamma_bar: &[f64]) -> Result<(Vec<f64>, SolverStats)> {
        let (j, f) = self.system(gamma_bar)?;
        let mut mg = Multigrid::new(j, &self.hierarchy, self.setup.solver)?;
        self.solve_with(&mut mg, &f, false)
    }

    fn constraint(&self, design: &DesignState, with_gradient: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let mesh = &self.setup.mesh;
        let vf = self.objective.volume_fraction;
        if self.objective.volume_on_physical {
            let (chi, g) = volume_constraint(mesh, &design.gamma_bar, vf)?;
            let d = if with_gradient {
                Some(self.pipeline.backward(design, &g)?)
            } else {
                None
            };
            Ok((chi, d))
        } else {
            let full = design.gamma_full(self.pipeline.extrusion())?;
            let (chi, g) = volume_constraint(mesh, &full, vf)?;
            let d = if with_gradient {
                Some(self.pipeline.reduce_raw(&g)?)
            } else {
                None
            };
            Ok((chi, d))
        }
    }

    /// Objective, constraint and, when requested, their gradients with respect to the design variables.
    pub fn evaluate(&mut self, gamma: &[f64], with_gradient: bool) -> Result<Evaluation> {
        let design = self.pipeline.forward(gamma)?;
        let coeff = self.coefficients(&design.gamma_bar)?;
        let (j, f) = self.system(&design.gamma_bar)?;
        let mut mg = Multigrid::new(j, &self.hierarchy, self.setup.solver)?;
        let (state, state_stats) = self.solve_with(&mut mg, &f, false)?;
        let mesh = self.setup.mesh;
        let (phi, mut dphi_ds) = objective(&mesh, &state, self.objective.p)?;
        let (chi, dchi) = self.constraint(&design, with_gradient)?;
        if !with_gradient {
            return Ok(Evaluation {
                design,
                state,
                phi,
                chi,
                state_stats,
                adjoint_stats: None,
                dphi: None,
                dchi: None,
            });
        }

        let mut mgt = mg.transposed()?;
        drop(mg);
        for &n in &self.fixed {
            dphi_ds[n] = 0.0;
        }
        let (lambda, adjoint_stats) = self.solve_with(&mut mgt, &dphi_ds, true)?;
        let ops = self.assembler.element_ops();
        let half_dt = 0.5 * mesh.dt();
        let stab = if self.stabilization_sensitivity { 1.0 } else { 0.0 };
        let dphi_dbar: Vec<f64> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let le = element_values(&mesh, &lambda, e);
                let se = element_values(&mesh, &state, e);
                let [g, kxy, kt] = ops.bilinear_parts(&le, &se);
                let m = coeff[e];
                -(m.dc * g + m.dk * kxy + stab * half_dt * m.dc * kt)
            })
            .collect();
        let dphi = self.pipeline.backward(&design, &dphi_dbar)?;
        Ok(Evaluation {
            design,
            state,
            phi,
            chi,
            state_stats,
            adjoint_stats: Some(adjoint_stats),
            dphi: Some(dphi),
            dchi,
        })
    }

}
