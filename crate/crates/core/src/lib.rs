//! Space-time finite element topology optimisation for transient heat conduction.

pub mod analysis;
pub mod assembly;
pub mod config;
pub mod design;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod reference;

pub use config::RunConfig;
pub use assembly::{Assembler, BoundaryKind, HeatSource, ProblemDefinition};
pub use design::{DesignMode, DesignPipeline, DesignState, FilterConfig};
pub use error::{Error, Result};
pub use hierarchy::{build_hierarchy, CoarseningKind, CoarseningStrategy, GridLevel, Hierarchy, LevelCount};
pub use linalg::{SolverConfig, SolverStats, SparseMatrix};
pub use mesh::{MaterialSet, SpaceTimeMesh};
pub use optimizer::{ObjectiveConfig, OptConfig, OptRecord, Optimizer, ProblemSetup, SpaceTimeProblem};
