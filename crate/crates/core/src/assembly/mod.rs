//! Stabilised continuous-Galerkin space-time discretisation of
//! `C dT/dt - div(k grad T) = Q` on trilinear bricks.

pub mod element;
pub mod global;
pub mod problem;

pub use element::{artificial_diffusion, element_matrix, time_peclet, ElementOperatorSet, Mat8};
pub use global::{apply_dirichlet, dirichlet_mask, element_values, gather_element_vectors, Assembler};
pub use problem::{dirichlet_set, spatial_dirichlet_mask, BoundaryKind, HeatSource, ProblemDefinition};
