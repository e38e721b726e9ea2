//! Global assembly over the structured mesh.
//!
//! Every global row is produced by gathering the contributions of the (up to)
//! eight elements sharing that node, always in the same order. Rows are
//! independent, so assembly runs in parallel and is bitwise reproducible.

use rayon::prelude::*;

use super::element::{gauss_points, shape_values, ElementOperatorSet};
use super::problem::ProblemDefinition;
use crate::error::{check_len, Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::SpaceTimeMesh;

const ROWS_PER_TASK: usize = 1024;

/// Elements touching node `(i, j, k)` paired with the node's local index in each.
#[inline]
fn adjacent_elements(mesh: &SpaceTimeMesh, i: usize, j: usize, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (nx, ny, nt) = mesh.dims();
    let range = |c: usize, n: usize| c.saturating_sub(1)..=c.min(n - 1);
    range(k, nt).flat_map(move |ek| {
        range(j, ny).flat_map(move |ej| {
            range(i, nx).map(move |ei| {
                let a = (i - ei) + 2 * (j - ej) + 4 * (k - ek);
                (mesh.element_index(ei, ej, ek), a)
            })
        })
    })
}

/// Sum of per-element nodal vectors into a global nodal vector.
pub fn gather_element_vectors(mesh: &SpaceTimeMesh, local: &[[f64; 8]]) -> Result<Vec<f64>> {
    check_len("element vectors", mesh.num_elements(), local.len())?;
    let mut out = vec![0.0; mesh.num_nodes()];
    out.par_chunks_mut(ROWS_PER_TASK).enumerate().for_each(|(chunk, vals)| {
        for (off, v) in vals.iter_mut().enumerate() {
            let (i, j, k) = mesh.node_ijk(chunk * ROWS_PER_TASK + off);
            *v = adjacent_elements(mesh, i, j, k).map(|(e, a)| local[e][a]).sum();
        }
    });
    Ok(out)
}

/// Nodal values of each element, in corner order.
#[inline]
pub fn element_values(mesh: &SpaceTimeMesh, nodal: &[f64], e: usize) -> [f64; 8] {
    let nodes = mesh.element_nodes(e);
    let mut v = [0.0; 8];
    for (a, n) in nodes.iter().enumerate() {
        v[a] = nodal[*n];
    }
    v
}

/// 27-point stencil sparsity shared by every operator on one mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: SpaceTimeMesh,
    ops: ElementOperatorSet,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl Assembler {
    pub fn new(mesh: SpaceTimeMesh) -> Self {
        let (nx, ny, nt) = mesh.dims();
        let n = mesh.num_nodes();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n * 27);
        row_ptr.push(0);
        for node in 0..n {
            let (i, j, k) = mesh.node_ijk(node);
            for kk in k.saturating_sub(1)..=(k + 1).min(nt) {
                for jj in j.saturating_sub(1)..=(j + 1).min(ny) {
                    for ii in i.saturating_sub(1)..=(i + 1).min(nx) {
                        col_idx.push(mesh.node_index(ii, jj, kk) as u32);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            ops: ElementOperatorSet::new(mesh.dx(), mesh.dt()),
            mesh,
            row_ptr,
            col_idx,
        }
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.mesh
    }
    pub fn element_ops(&self) -> &ElementOperatorSet {
        &self.ops
    }
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Assembles `sum_e A_e` where `row(e, a)` is row `a` of element `e`'s matrix.
    pub fn assemble_rows<F>(&self, row: F) -> Result<SparseMatrix>
    where
        F: Fn(usize, usize) -> [f64; 8] + Sync,
    {
        let mesh = &self.mesh;
        let n = mesh.num_nodes();
        let mut values = vec![0.0; self.col_idx.len()];
        // Hand each task the contiguous value range of its rows.
        let mut tasks = Vec::with_capacity(n.div_ceil(ROWS_PER_TASK));
        let mut rest: &mut [f64] = &mut values;
        for r0 in (0..n).step_by(ROWS_PER_TASK) {
            let r1 = (r0 + ROWS_PER_TASK).min(n);
            let (head, tail) = rest.split_at_mut(self.row_ptr[r1] - self.row_ptr[r0]);
            tasks.push((r0, r1, head));
            rest = tail;
        }
        tasks.into_par_iter().for_each(|(r0, r1, vals)| {
            let base = self.row_ptr[r0];
            for node in r0..r1 {
                let (i, j, k) = mesh.node_ijk(node);
                let mut acc = [0.0; 27];
                for (e, a) in adjacent_elements(mesh, i, j, k) {
                    let (ei, ej, ek) = mesh.element_ijk(e);
                    let r = row(e, a);
                    for (b, c) in crate::mesh::CORNERS.iter().enumerate() {
                        // Offsets in {-1, 0, 1} relative to the row node, shifted to {0, 1, 2}.
                        let di = ei + c[0] + 1 - i;
                        let dj = ej + c[1] + 1 - j;
                        let dk = ek + c[2] + 1 - k;
                        acc[(dk * 3 + dj) * 3 + di] += r[b];
                    }
                }
                let mut p = self.row_ptr[node] - base;
                for dk in 0..3 {
                    if (k == 0 && dk == 0) || (k == mesh.nt() && dk == 2) {
                        continue;
                    }
                    for dj in 0..3 {
                        if (j == 0 && dj == 0) || (j == mesh.ny() && dj == 2) {
                            continue;
                        }
                        for di in 0..3 {
                            if (i == 0 && di == 0) || (i == mesh.nx() && di == 2) {
                                continue;
                            }
                            vals[p] = acc[(dk * 3 + dj) * 3 + di];
                            p += 1;
                        }
                    }
                }
                debug_assert_eq!(p, self.row_ptr[node + 1] - base);
            }
        });
        SparseMatrix::from_csr(n, n, self.row_ptr.clone(), self.col_idx.clone(), values)
    }

    /// Stabilised space-time operator for elementwise capacity `c` and conductivity `k`.
    /// No boundary conditions are applied.
    pub fn system(&self, c: &[f64], k: &[f64]) -> Result<SparseMatrix> {
        check_len("element capacities", self.mesh.num_elements(), c.len())?;
        check_len("element conductivities", self.mesh.num_elements(), k.len())?;
        if let Some(e) = (0..c.len()).find(|&e| !(c[e] > 0.0 && k[e] > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "element {e} has non-positive coefficients C={} k={}",
                c[e], k[e]
            )));
        }
        self.assemble_rows(|e, a| self.ops.system_row(c[e], k[e], a))
    }

    /// Load vector `f_a = int N_a Q dV` by 2x2x2 Gauss quadrature.
    pub fn source(&self, problem: &ProblemDefinition) -> Result<Vec<f64>> {
        let mesh = &self.mesh;
        let (dx, dt) = (mesh.dx(), mesh.dt());
        let jac = dx * dx * dt;
        let qp: Vec<([f64; 3], f64, [f64; 8])> = gauss_points().map(|(s, w)| (s, w, shape_values(s))).collect();
        let local: Vec<[f64; 8]> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let o = mesh.element_origin(e);
                let mut fe = [0.0; 8];
                for (s, w, n) in &qp {
                    let q = problem.source_at(o[0] + s[0] * dx, o[1] + s[1] * dx, o[2] + s[2] * dt);
                    for a in 0..8 {
                        fe[a] += w * jac * q * n[a];
                    }
                }
                fe
            })
            .collect();
        gather_element_vectors(mesh, &local)
    }
}

/// Symmetric elimination of the constrained nodes with homogeneous data:
/// rows and columns zeroed, unit diagonal, right-hand side zeroed.
pub fn apply_dirichlet(j: &mut SparseMatrix, f: &mut [f64], fixed: &[usize]) -> Result<()> {
    check_len("dirichlet rhs", j.nrows(), f.len())?;
    let mask = dirichlet_mask(j.nrows(), fixed)?;
    j.constrain_symmetric(&mask)?;
    for &n in fixed {
        f[n] = 0.0;
    }
    Ok(())
}

pub fn dirichlet_mask(n: usize, fixed: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &id in fixed {
        if id >= n {
            return Err(Error::InvalidArgument(format!("constrained node {id} out of range (n = {n})")));
        }
        mask[id] = true;
    }
    Ok(mask)
}
