//! Multigrid level selection by anisotropy-driven semi-coarsening.
//!
//! Each step halves either the two spatial directions or the time direction.
//! The choice compares `lambda = D_eff dt / dx^2` against a critical value:
//! strongly time-coupled levels (`lambda < lambda_crit`) are coarsened in time,
//! all others in space.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{MaterialSet, SpaceTimeMesh};

pub const DEFAULT_LAMBDA_CRIT: f64 = 0.5;

/// Automatic level selection stops once the coarsest grid has at most this many nodes.
pub const AUTO_COARSE_NODES: usize = 2_000;

/// How a level was obtained from its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseningKind {
    Finest,
    Space,
    Time,
    /// Space and time halved together (comparison mode only).
    SpaceTime,
}

impl CoarseningKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoarseningKind::Finest => "finest",
            CoarseningKind::Space => "space",
            CoarseningKind::Time => "time",
            CoarseningKind::SpaceTime => "space-time",
        }
    }

    fn halves_space(&self) -> bool {
        matches!(self, CoarseningKind::Space | CoarseningKind::SpaceTime)
    }

    fn halves_time(&self) -> bool {
        matches!(self, CoarseningKind::Time | CoarseningKind::SpaceTime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseningStrategy {
    /// Halve one direction per level, chosen by the anisotropy criterion.
    #[default]
    Semi,
    /// Halve every direction on every level.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelCount {
    /// Coarsen until the coarsest grid is small enough or cannot be halved.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub level: usize,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub kind: CoarseningKind,
}

impl GridLevel {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nt)
    }
    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }
    pub fn dt(&self) -> f64 {
        1.0 / self.nt as f64
    }
    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * (self.nt + 1)
    }
    /// `D_eff dt / dx^2` on this level.
    pub fn lambda(&self, d_eff: f64) -> f64 {
        d_eff * self.dt() / (self.dx() * self.dx())
    }
}

/// The ordered level stack, finest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    levels: Vec<GridLevel>,
    d_eff: f64,
    lambda_crit: f64,
}

impl Hierarchy {
    pub fn levels(&self) -> &[GridLevel] {
        &self.levels
    }
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
    pub fn d_eff(&self) -> f64 {
        self.d_eff
    }
    pub fn lambda_crit(&self) -> f64 {
        self.lambda_crit
    }
    pub fn dims(&self) -> Vec<(usize, usize, usize)> {
        self.levels.iter().map(GridLevel::dims).collect()
    }

    /// Plain-text table: level, dimensions, coarsening kind, lambda.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>5}  {:>18}  {:>10}  {:>12}", "level", "n_x1 x n_x2 x n_t", "kind", "lambda_eff");
        for l in &self.levels {
            let dims = format!("{}x{}x{}", l.nx, l.ny, l.nt);
            let _ = writeln!(
                out,
                "{:>5}  {:>18}  {:>10}  {:>12.5}",
                l.level,
                dims,
                l.kind.as_str(),
                l.lambda(self.d_eff)
            );
        }
        out
    }
}

/// Halves the requested directions, or names the direction whose count is odd or below 4.
fn coarsen(parent: &GridLevel, kind: CoarseningKind) -> std::result::Result<GridLevel, (&'static str, usize)> {
    let mut child = GridLevel {
        level: parent.level + 1,
        kind,
        ..*parent
    };
    if kind.halves_space() {
        if parent.nx % 2 != 0 || parent.nx < 4 {
            return Err(("space", parent.nx));
        }
        child.nx /= 2;
        child.ny /= 2;
    }
    if kind.halves_time() {
        if parent.nt % 2 != 0 || parent.nt < 4 {
            return Err(("time", parent.nt));
        }
        child.nt /= 2;
    }
    Ok(child)
}

pub fn build_hierarchy(
    mesh: &SpaceTimeMesh,
    materials: &MaterialSet,
    count: LevelCount,
    lambda_crit: f64,
    strategy: CoarseningStrategy,
) -> Result<Hierarchy> {
    if !(lambda_crit > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_crit must be positive, got {lambda_crit}")));
    }
    if let LevelCount::Fixed(n) = count {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 multigrid levels, got {n}")));
        }
    }
    let d_eff = materials.effective_diffusivity();
    let mut levels = vec![GridLevel {
        level: 0,
        nx: mesh.nx(),
        ny: mesh.ny(),
        nt: mesh.nt(),
        kind: CoarseningKind::Finest,
    }];
    loop {
        let last = *levels.last().expect("hierarchy is never empty");
        let want_more = match count {
            LevelCount::Fixed(n) => levels.len() < n,
            LevelCount::Auto => levels.len() < 2 || last.num_nodes() > AUTO_COARSE_NODES,
        };
        if !want_more {
            break;
        }
        let kind = match strategy {
            CoarseningStrategy::Full => CoarseningKind::SpaceTime,
            CoarseningStrategy::Semi if last.lambda(d_eff) < lambda_crit => CoarseningKind::Time,
            CoarseningStrategy::Semi => CoarseningKind::Space,
        };
        match coarsen(&last, kind) {
            Ok(child) => levels.push(child),
            Err((direction, n)) => match count {
                LevelCount::Fixed(_) => {
                    return Err(Error::Coarsening {
                        level: last.level,
                        direction,
                        count: n,
                    })
                }
                LevelCount::Auto => break,
            },
        }
    }
    Ok(Hierarchy {
        levels,
        d_eff,
        lambda_crit,
    })
}
