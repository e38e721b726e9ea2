//! Sparse kernels and the Krylov/multigrid solver stack.

pub mod krylov;
pub mod multigrid;
pub mod sparse;
pub mod vector;

pub use krylov::{
    cg_jacobi, fgmres, gmres_jacobi, inverse_diagonal, GmresWorkspace, Jacobi, KrylovOutcome, Preconditioner,
    SolverStats,
};
pub use multigrid::{build_prolongation, galerkin, Multigrid, SolverConfig};
pub use sparse::SparseMatrix;
