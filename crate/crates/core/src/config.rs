//! Run configuration: JSON schema, named presets and cross-field validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assembly::ProblemDefinition;
use crate::design::{DesignMode, FilterConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, CoarseningStrategy, LevelCount, DEFAULT_LAMBDA_CRIT};
use crate::linalg::SolverConfig;
use crate::mesh::{MaterialSet, SpaceTimeMesh};
use crate::optimizer::{ObjectiveConfig, OptConfig, ProblemSetup};

/// Mesh used by every `-reduced` preset.
pub const REDUCED_DIMS: (usize, usize, usize) = (64, 64, 128);

pub const PRESETS: [&str; 9] = ["ex1a", "ex1b", "ex1c", "ex1d", "ex2a", "ex2b", "ex2c", "ex2d", "ex2e"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDims {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub levels: LevelCount,
    pub strategy: CoarseningStrategy,
    pub lambda_crit: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            levels: LevelCount::Auto,
            strategy: CoarseningStrategy::Semi,
            lambda_crit: DEFAULT_LAMBDA_CRIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub problem: ProblemDefinition,
    pub mesh: MeshDims,
    /// `materials.tau` must equal `problem.tau`.
    pub materials: MaterialSet,
    pub design_mode: DesignMode,
    pub filter: FilterConfig,
    pub solver: SolverConfig,
    pub hierarchy: HierarchyConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptConfig,
    /// Worker threads; `None` uses the environment override or all cores.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Write a design snapshot every this many iterations; 0 writes only the final design.
    pub vtk_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("ex1a-reduced").expect("built-in preset")
    }
}

fn base(name: &str, problem: ProblemDefinition, dims: (usize, usize, usize)) -> RunConfig {
    RunConfig {
        name: name.to_string(),
        problem,
        mesh: MeshDims {
            nx: dims.0,
            ny: dims.1,
            nt: dims.2,
        },
        materials: MaterialSet::default().with_tau(problem.tau),
        design_mode: DesignMode::TimeConstant,
        filter: FilterConfig::default(),
        solver: SolverConfig::default(),
        hierarchy: HierarchyConfig::default(),
        objective: ObjectiveConfig::default(),
        optimizer: OptConfig::default(),
        threads: None,
        output_dir: PathBuf::from("out"),
        seed: 0,
        vtk_every: 0,
    }
}

impl RunConfig {
    /// Named configuration. Append `-reduced` to any name for the 64x64x128 desk-scale variant
    /// with automatic level selection.
    pub fn preset(name: &str) -> Result<Self> {
        let (stem, reduced) = match name.strip_suffix("-reduced") {
            Some(s) => (s, true),
            None => (name, false),
        };
        let ex1 = ProblemDefinition::example1();
        let ex2 = ProblemDefinition::example2();
        let fine = (640, 640, 1280);
        let mut c = match stem {
            "ex1a" => base(name, ex1, (100, 100, 480)),
            "ex1b" | "ex1c" | "ex1d" => {
                let mut c = base(name, ex1, fine);
                c.hierarchy.levels = LevelCount::Fixed(7);
                match stem {
                    "ex1c" => c.materials.k_con = 10.0,
                    "ex1d" => {
                        c.materials.c_con = 100.0;
                        c.materials.p_c = 4.0;
                    }
                    _ => {}
                }
                c
            }
            "ex2a" => {
                let mut c = base(name, ex2, fine);
                c.hierarchy.levels = LevelCount::Fixed(8);
                c
            }
            "ex2b" | "ex2c" => {
                let mut c = base(name, ex2, fine);
                c.hierarchy.levels = LevelCount::Fixed(8);
                c.design_mode = DesignMode::SpaceTime;
                c.filter.rt_physical = Some(0.3);
                c.objective.volume_fraction = 0.1;
                if stem == "ex2c" {
                    c.materials.c_con = 100.0;
                }
                c
            }
            "ex2d" | "ex2e" => {
                let mut c = base(name, ex2, (1280, 1280, 2560));
                c.design_mode = DesignMode::SpaceTime;
                c.objective.volume_fraction = 0.1;
                if stem == "ex2e" {
                    c.filter.rt_physical = Some(0.0166);
                }
                c
            }
            _ => {
                return Err(Error::Config(vec![format!(
                    "unknown preset {name:?}; known: {} (each also with -reduced)",
                    PRESETS.join(", ")
                )]))
            }
        };
        if reduced {
            c.mesh = MeshDims {
                nx: REDUCED_DIMS.0,
                ny: REDUCED_DIMS.1,
                nt: REDUCED_DIMS.2,
            };
            c.hierarchy.levels = LevelCount::Auto;
        }
        Ok(c)
    }

    /// Parses JSON. A top-level `"preset"` key selects the starting point and
    /// every other key overrides it, merging nested objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut user: Value = serde_json::from_str(text)?;
        let obj = user
            .as_object_mut()
            .ok_or_else(|| Error::Config(vec!["configuration must be a JSON object".into()]))?;
        let start = match obj.remove("preset") {
            Some(Value::String(p)) => Self::preset(&p)?,
            Some(other) => return Err(Error::Config(vec![format!("preset must be a string, got {other}")])),
            None => Self::default(),
        };
        let mut merged = serde_json::to_value(start)?;
        merge(&mut merged, user);
        Ok(serde_json::from_value(merged)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn space_time_mesh(&self) -> Result<SpaceTimeMesh> {
        SpaceTimeMesh::with_tau(self.mesh.nx, self.mesh.ny, self.mesh.nt, self.problem.tau)
    }

    /// Reports every violated field at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut absorb = |r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Config(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
        };
        absorb(self.materials.validate());
        absorb(self.filter.validate());
        absorb(self.solver.validate());
        absorb(self.objective.validate());
        absorb(self.optimizer.validate());
        let mesh = self.space_time_mesh();
        if let Err(e) = &mesh {
            errs.push(format!("mesh: {e}"));
        }
        if !(self.problem.tau > 0.0) {
            errs.push(format!("problem.tau must be positive, got {}", self.problem.tau));
        }
        if self.materials.tau != self.problem.tau {
            errs.push(format!(
                "materials.tau ({}) must equal problem.tau ({})",
                self.materials.tau, self.problem.tau
            ));
        }
        if self.threads == Some(0) {
            errs.push("threads must be >= 1".into());
        }
        if let Ok(mesh) = &mesh {
            if let Err(e) = build_hierarchy(
                mesh,
                &self.materials,
                self.hierarchy.levels,
                self.hierarchy.lambda_crit,
                self.hierarchy.strategy,
            ) {
                errs.push(format!("hierarchy: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn problem_setup(&self) -> Result<ProblemSetup> {
        self.validate()?;
        Ok(ProblemSetup {
            mesh: self.space_time_mesh()?,
            materials: self.materials,
            problem: self.problem,
            mode: self.design_mode,
            filter: self.filter,
            solver: self.solver,
            levels: self.hierarchy.levels,
            strategy: self.hierarchy.strategy,
            lambda_crit: self.hierarchy.lambda_crit,
        })
    }
}

/// Recursively overlays `patch` onto `target`; non-object values replace.
fn merge(target: &mut Value, patch: Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                match t.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        t.insert(k, v);
                    }
                }
            }
        }
        (t, p) => *t = p,
    }
}
