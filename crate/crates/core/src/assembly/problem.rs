//! Heat sources and boundary descriptions of the benchmark problems.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::mesh::SpaceTimeMesh;

const GEOM_EPS: f64 = 1e-12;

/// Volumetric heat source in rescaled coordinates (`t` in `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeatSource {
    /// Spatially uniform, `q0/2 (1 - t)(1 + cos(omega t))`.
    Oscillating { q0: f64, omega: f64 },
    /// Gaussian spot orbiting the domain centre. The orbit angle advances in
    /// physical time `tau * t`.
    OrbitingGaussian { q0: f64, radius: f64, sigma: f64, omega: f64 },
    Uniform { q: f64 },
}

impl HeatSource {
    /// Centre of the orbiting spot at rescaled time `t`.
    pub fn orbit_center(radius: f64, omega: f64, tau: f64, t: f64) -> [f64; 2] {
        let angle = omega * tau * t + FRAC_PI_2;
        [0.5 + radius * angle.cos(), 0.5 + radius * angle.sin()]
    }

    pub fn evaluate(&self, x1: f64, x2: f64, t: f64, tau: f64) -> f64 {
        match *self {
            HeatSource::Oscillating { q0, omega } => 0.5 * q0 * (1.0 - t) * (1.0 + (omega * t).cos()),
            HeatSource::OrbitingGaussian {
                q0,
                radius,
                sigma,
                omega,
            } => {
                let c = Self::orbit_center(radius, omega, tau, t);
                let r2 = (x1 - c[0]).powi(2) + (x2 - c[1]).powi(2);
                q0 * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            HeatSource::Uniform { q } => q,
        }
    }
}

/// Where temperature is held at zero for all times. The initial plane `t = 0`
/// is always constrained in addition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Segment of the `x2 = 0` edge with `|x1 - center| <= half_width`.
    Sink { center: f64, half_width: f64 },
    /// The whole spatial boundary.
    AllSides,
    /// No spatial constraint (zero-flux everywhere).
    Insulated,
}

impl BoundaryKind {
    /// Whether the spatial point `(x1, x2)` is held fixed.
    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        match *self {
            BoundaryKind::Sink { center, half_width } => {
                x2.abs() <= GEOM_EPS && (x1 - center).abs() <= half_width + GEOM_EPS
            }
            BoundaryKind::AllSides => {
                x1 <= GEOM_EPS || x2 <= GEOM_EPS || x1 >= 1.0 - GEOM_EPS || x2 >= 1.0 - GEOM_EPS
            }
            BoundaryKind::Insulated => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemDefinition {
    pub source: HeatSource,
    pub boundary: BoundaryKind,
    /// Final physical time.
    pub tau: f64,
}

impl ProblemDefinition {
    /// Decaying, oscillating uniform load cooled through a small sink on the lower edge.
    pub fn example1() -> Self {
        Self {
            source: HeatSource::Oscillating { q0: 100.0, omega: 50.0 },
            boundary: BoundaryKind::Sink {
                center: 0.5,
                half_width: 0.05,
            },
            tau: 1.0,
        }
    }

    /// Orbiting Gaussian spot with every spatial boundary held cold.
    pub fn example2() -> Self {
        Self {
            source: HeatSource::OrbitingGaussian {
                q0: 1.0,
                radius: 0.25,
                sigma: 0.05,
                omega: std::f64::consts::PI,
            },
            boundary: BoundaryKind::AllSides,
            tau: 6.0,
        }
    }

    pub fn source_at(&self, x1: f64, x2: f64, t: f64) -> f64 {
        self.source.evaluate(x1, x2, t, self.tau)
    }
}

/// Sorted ids of constrained nodes: the initial plane plus the spatial boundary set at every time.
pub fn dirichlet_set(mesh: &SpaceTimeMesh, problem: &ProblemDefinition) -> Vec<usize> {
    let spatial = spatial_dirichlet_mask(mesh.nx(), mesh.ny(), &problem.boundary);
    let per_slab = mesh.nodes_per_slab();
    (0..mesh.num_nodes())
        .filter(|&n| n < per_slab || spatial[n % per_slab])
        .collect()
}

/// Mask over the `(nx+1)(ny+1)` nodes of one spatial plane.
pub fn spatial_dirichlet_mask(nx: usize, ny: usize, boundary: &BoundaryKind) -> Vec<bool> {
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut mask = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            mask.push(boundary.contains(i as f64 * hx, j as f64 * hy));
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillating_source_values() {
        let p = ProblemDefinition::example1();
        assert_eq!(p.source_at(0.3, 0.7, 0.0), 100.0);
        assert_eq!(p.source_at(0.3, 0.7, 1.0), 0.0);
    }

    #[test]
    fn orbiting_source_values() {
        let p = ProblemDefinition::example2();
        assert!((p.source_at(0.5, 0.75, 0.0) - 1.0).abs() < 1e-15);
        assert!((p.source_at(0.5, 0.8, 0.0) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((p.source_at(0.5, 0.8, 0.0) - 0.60653).abs() < 1e-5);
        // Half an orbit takes one physical time unit.
        let c = HeatSource::orbit_center(0.25, std::f64::consts::PI, 6.0, 1.0 / 6.0);
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn all_sides_set_on_tiny_mesh() {
        let m = SpaceTimeMesh::new(2, 2, 2).unwrap();
        let set = dirichlet_set(&m, &ProblemDefinition::example2());
        assert_eq!(set.len(), 25);
        assert!(set.iter().all(|&n| n < m.num_nodes()));
    }

    #[test]
    fn sink_is_tenth_of_edge() {
        let m = SpaceTimeMesh::new(20, 20, 2).unwrap();
        let set = dirichlet_set(&m, &ProblemDefinition::example1());
        // x1 in {0.45, 0.5, 0.55} on the lower edge, for the two later planes.
        assert_eq!(set.len(), 441 + 3 * 2);
        let mask = spatial_dirichlet_mask(20, 20, &ProblemDefinition::example1().boundary);
        assert_eq!(mask.iter().positions_true(), vec![9, 10, 11]);
    }

    trait PositionsTrue {
        fn positions_true(self) -> Vec<usize>;
    }
    impl<'a, I: Iterator<Item = &'a bool>> PositionsTrue for I {
        fn positions_true(self) -> Vec<usize> {
            self.enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
        }
    }
}
