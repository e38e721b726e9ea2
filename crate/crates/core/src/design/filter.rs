//! Anisotropic Helmholtz-type PDE filter on the space-time mesh.
//!
//! Element field in, element field out: the element values are spread onto
//! the nodes with `int N_a dV` weights, the reaction-diffusion system
//! `(D + M) u = rhs` is solved with homogeneous Neumann conditions, and each
//! element takes the mean of its eight nodal values.

use rayon::prelude::*;

use crate::assembly::{element_values, gather_element_vectors, Assembler};
use crate::error::{check_len, Error, Result};
use crate::linalg::{cg_jacobi, inverse_diagonal, SparseMatrix};
use crate::mesh::SpaceTimeMesh;

/// Filter solves failing to converge within this many iterations are errors.
pub const FILTER_MAXIT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PdeFilter {
    mesh: SpaceTimeMesh,
    matrix: SparseMatrix,
    inv_diag: Vec<f64>,
    f_unit: [f64; 8],
    rtol: f64,
}

impl PdeFilter {
    /// `rx`, `rt` are filter radii in rescaled units; the diffusion tensor is `diag(rx^2, rx^2, rt^2) / 12`.
    pub fn new(assembler: &Assembler, rx: f64, rt: f64, rtol: f64) -> Result<Self> {
        if !(rx > 0.0 && rt > 0.0) {
            return Err(Error::InvalidArgument(format!("filter radii must be positive, got rx={rx} rt={rt}")));
        }
        if !(rtol > 0.0 && rtol < 1.0) {
            return Err(Error::InvalidArgument(format!("filter tolerance must lie in (0, 1), got {rtol}")));
        }
        let ops = assembler.element_ops().clone();
        let (dxy, dtt) = (rx * rx / 12.0, rt * rt / 12.0);
        let matrix = assembler.assemble_rows(|_, a| {
            let mut row = [0.0; 8];
            for (b, r) in row.iter_mut().enumerate() {
                *r = dxy * ops.k_xy[a][b] + dtt * ops.k_t[a][b] + ops.m[a][b];
            }
            row
        })?;
        Ok(Self {
            mesh: *assembler.mesh(),
            inv_diag: inverse_diagonal(&matrix)?,
            matrix,
            f_unit: ops.f_unit,
            rtol,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn set_rtol(&mut self, rtol: f64) {
        self.rtol = rtol;
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut u = vec![0.0; rhs.len()];
        let out = cg_jacobi(&self.matrix, &self.inv_diag, rhs, &mut u, self.rtol, FILTER_MAXIT)?;
        if !out.converged {
            return Err(Error::NotConverged {
                solver: "filter cg",
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        Ok(u)
    }

    /// Filtered element field.
    pub fn apply(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        check_len("filter input", self.mesh.num_elements(), gamma.len())?;
        let fu = self.f_unit;
        let local: Vec<[f64; 8]> = gamma.par_iter().map(|&g| fu.map(|w| w * g)).collect();
        let rhs = gather_element_vectors(&self.mesh, &local)?;
        let u = self.solve(&rhs)?;
        Ok((0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| element_values(&self.mesh, &u, e).iter().sum::<f64>() / 8.0)
            .collect())
    }

    /// Exact adjoint of [`PdeFilter::apply`].
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("filter transpose input", self.mesh.num_elements(), y.len())?;
        let local: Vec<[f64; 8]> = y.par_iter().map(|&v| [v / 8.0; 8]).collect();
        let rhs = gather_element_vectors(&self.mesh, &local)?;
        let u = self.solve(&rhs)?;
        let fu = self.f_unit;
        Ok((0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let ue = element_values(&self.mesh, &u, e);
                (0..8).map(|a| fu[a] * ue[a]).sum()
            })
            .collect())
    }
}
