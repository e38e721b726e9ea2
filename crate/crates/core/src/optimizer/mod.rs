//! Nested optimisation loop: evaluate, update with MMA, record.

pub mod gradcheck;
pub mod mma;
pub mod objective;
pub mod problem;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport};
pub use mma::{Mma, MmaConfig, MmaStep};
pub use objective::{element_averages, objective, p_norm, volume_constraint};
pub use problem::{Evaluation, ObjectiveConfig, ProblemSetup, SpaceTimeProblem, StateSolution};

use crate::design::DesignState;
use crate::error::{Error, Result};
use crate::linalg::SolverStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub max_iterations: usize,
    /// The loop stops once the largest design change of an update falls below this.
    pub stop_tol: f64,
    pub mma: MmaConfig,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            stop_tol: 1e-4,
            mma: MmaConfig::default(),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.stop_tol >= 0.0) {
            errs.push(format!("optimizer.stop_tol must be >= 0, got {}", self.stop_tol));
        }
        if let Err(Error::Config(v)) = self.mma.validate() {
            errs.extend(v);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Metrics of one evaluated design. The last record of a run describes the
/// final design and carries no adjoint solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRecord {
    pub iter: usize,
    pub phi: f64,
    pub chi: f64,
    pub state: SolverStats,
    pub adjoint: Option<SolverStats>,
    /// Max-norm of the update taken from this design; zero for the final record.
    pub design_change: f64,
    /// Wall time of the whole iteration: evaluation plus update.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub gamma: Vec<f64>,
    pub design: DesignState,
    pub state: Vec<f64>,
    pub records: Vec<OptRecord>,
    /// True when the design-change criterion ended the loop before the iteration cap.
    pub converged: bool,
}

pub struct Optimizer {
    problem: SpaceTimeProblem,
    config: OptConfig,
    records: Vec<OptRecord>,
}

impl Optimizer {
    pub fn new(problem: SpaceTimeProblem, config: OptConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            problem,
            config,
            records: Vec::new(),
        })
    }

    pub fn problem(&self) -> &SpaceTimeProblem {
        &self.problem
    }
    pub fn problem_mut(&mut self) -> &mut SpaceTimeProblem {
        &mut self.problem
    }
    /// Records of the latest run, kept even when it aborted.
    pub fn records(&self) -> &[OptRecord] {
        &self.records
    }

    /// Uniform initial design at the target volume fraction.
    pub fn initial_design(&self) -> Vec<f64> {
        vec![self.problem.objective_config().volume_fraction; self.problem.num_design_variables()]
    }

    /// Runs from `gamma0` (or the uniform initial design), calling `observer` after every record.
    pub fn run<F>(&mut self, gamma0: Option<Vec<f64>>, mut observer: F) -> Result<OptResult>
    where
        F: FnMut(&OptRecord, &Evaluation) -> Result<()>,
    {
        self.records.clear();
        let mut gamma = gamma0.unwrap_or_else(|| self.initial_design());
        let mut mma = Mma::new(gamma.len(), self.config.mma, self.problem.pipeline().beta())?;
        let mut converged = false;
        for iter in 0..self.config.max_iterations {
            let start = Instant::now();
            let eval = self.problem.evaluate(&gamma, true)?;
            let dphi = eval.dphi.as_deref().expect("gradient requested");
            let dchi = eval.dchi.as_deref().expect("gradient requested");
            let step = mma.update(&gamma, dphi, eval.chi, dchi)?;
            let change = step
                .x
                .iter()
                .zip(&gamma)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let record = OptRecord {
                iter,
                phi: eval.phi,
                chi: eval.chi,
                state: eval.state_stats.clone(),
                adjoint: eval.adjoint_stats.clone(),
                design_change: change,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            log::info!(
                "iter {iter:4} phi {:.6e} chi {:+.3e} change {change:.3e} state {} adjoint {}",
                record.phi,
                record.chi,
                record.state.outer_iterations,
                record.adjoint.as_ref().map_or(0, |s| s.outer_iterations)
            );
            self.records.push(record);
            observer(self.records.last().expect("just pushed"), &eval)?;
            gamma = step.x;
            if change < self.config.stop_tol {
                converged = true;
                break;
            }
        }
        let start = Instant::now();
        let eval = self.problem.evaluate(&gamma, false)?;
        let record = OptRecord {
            iter: self.records.len(),
            phi: eval.phi,
            chi: eval.chi,
            state: eval.state_stats.clone(),
            adjoint: None,
            design_change: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        self.records.push(record);
        observer(self.records.last().expect("just pushed"), &eval)?;
        Ok(OptResult {
            gamma,
            design: eval.design,
            state: eval.state,
            records: self.records.clone(),
            converged,
        })
    }
}
