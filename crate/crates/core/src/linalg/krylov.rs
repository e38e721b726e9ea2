//! Krylov solvers: Jacobi-preconditioned GMRES, flexible GMRES and Jacobi-CG.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use super::vector::{axpy, dot, hadamard, norm, residual_in_place, scale};
use crate::error::{check_len, Error, Result};

/// Anything that can approximately apply `A^{-1}`.
pub trait Preconditioner {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()>;

    /// Cumulative inner iterations per level, for preconditioners that run solvers.
    fn level_iterations(&self) -> Vec<usize> {
        Vec::new()
    }
}

impl<F> Preconditioner for F
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        self(r, z)
    }
}

/// Pointwise Jacobi scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Ok(Self {
            inv_diag: inverse_diagonal(a)?,
        })
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }
}

impl Preconditioner for Jacobi {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        hadamard(&self.inv_diag, r, z);
        Ok(())
    }
}

pub fn inverse_diagonal(a: &SparseMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(row, d)| {
            if d == 0.0 || !d.is_finite() {
                Err(Error::ZeroDiagonal { row })
            } else {
                Ok(1.0 / d)
            }
        })
        .collect()
}

/// Result of an inner (smoother, coarse or filter) solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
}

/// Reusable Arnoldi storage for [`gmres_jacobi`].
#[derive(Debug, Default, Clone)]
pub struct GmresWorkspace {
    basis: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    hess: Vec<f64>,
    cs: Vec<f64>,
    sn: Vec<f64>,
    g: Vec<f64>,
}

impl GmresWorkspace {
    fn ensure(&mut self, n: usize, restart: usize) {
        if self.basis.len() < restart + 1 || self.basis.first().map_or(true, |v| v.len() != n) {
            self.basis = (0..restart + 1).map(|_| vec![0.0; n]).collect();
        }
        self.tmp.resize(n, 0.0);
        self.hess.clear();
        self.hess.resize((restart + 1) * restart, 0.0);
        self.cs.clear();
        self.cs.resize(restart, 0.0);
        self.sn.clear();
        self.sn.resize(restart, 0.0);
        self.g.clear();
        self.g.resize(restart + 1, 0.0);
    }
}

/// Computes a Givens rotation `(c, s)` with `[c s; -s c] [a; b] = [r; 0]`.
#[inline]
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if b.abs() > a.abs() {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    } else {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    }
}

/// Applies the stored rotations to column `k` of the Hessenberg matrix, then
/// eliminates its subdiagonal. Returns the updated residual estimate `|g[k+1]|`.
fn rotate_column(hess: &mut [f64], ld: usize, cs: &mut [f64], sn: &mut [f64], g: &mut [f64], k: usize) -> f64 {
    let h = |i: usize| i * ld + k;
    for i in 0..k {
        let (a, b) = (hess[h(i)], hess[h(i + 1)]);
        hess[h(i)] = cs[i] * a + sn[i] * b;
        hess[h(i + 1)] = -sn[i] * a + cs[i] * b;
    }
    let (c, s) = givens(hess[h(k)], hess[h(k + 1)]);
    cs[k] = c;
    sn[k] = s;
    hess[h(k)] = c * hess[h(k)] + s * hess[h(k + 1)];
    hess[h(k + 1)] = 0.0;
    g[k + 1] = -s * g[k];
    g[k] *= c;
    g[k + 1].abs()
}

/// Back substitution on the rotated `k x k` Hessenberg block.
fn solve_upper(hess: &[f64], ld: usize, g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= hess[i * ld + j] * y[j];
        }
        y[i] = s / hess[i * ld + i];
    }
    y
}

/// Restarted GMRES with left Jacobi preconditioning.
///
/// Converges when `|D^{-1}(b - A x)| <= rtol |D^{-1} b|`. `x` holds the initial
/// guess on entry and the best iterate on exit. Running out of iterations is
/// not an error; check [`KrylovOutcome::converged`].
#[allow(clippy::too_many_arguments)]
pub fn gmres_jacobi(
    a: &SparseMatrix,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    maxit: usize,
    restart: usize,
    ws: &mut GmresWorkspace,
) -> Result<KrylovOutcome> {
    let n = b.len();
    check_len("gmres rhs", a.nrows(), n)?;
    check_len("gmres iterate", a.ncols(), x.len())?;
    check_len("gmres diagonal", n, inv_diag.len())?;
    let restart = restart.max(1).min(maxit.max(1));
    ws.ensure(n, restart);
    let ld = restart;

    hadamard(inv_diag, b, &mut ws.tmp);
    let bnorm = norm(&ws.tmp);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovOutcome {
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
        });
    }

    let mut total = 0;
    loop {
        a.mul_into(x, &mut ws.tmp);
        residual_in_place(b, &mut ws.tmp);
        hadamard(inv_diag, &ws.tmp, &mut ws.basis[0]);
        let beta = norm(&ws.basis[0]);
        if !beta.is_finite() {
            return Err(Error::Breakdown {
                solver: "gmres",
                iterations: total,
                reason: "non-finite residual".into(),
            });
        }
        let mut rel = beta / bnorm;
        if rel <= rtol || total >= maxit {
            return Ok(KrylovOutcome {
                iterations: total,
                converged: rel <= rtol,
                relative_residual: rel,
            });
        }
        scale(1.0 / beta, &mut ws.basis[0]);
        ws.hess.iter_mut().for_each(|v| *v = 0.0);
        ws.g.iter_mut().for_each(|v| *v = 0.0);
        ws.g[0] = beta;

        let mut k = 0;
        let mut happy = false;
        while k < restart && total < maxit {
            a.mul_into(&ws.basis[k], &mut ws.tmp);
            let (head, tail) = ws.basis.split_at_mut(k + 1);
            let w = &mut tail[0];
            hadamard(inv_diag, &ws.tmp, w);
            for (i, vi) in head.iter().enumerate() {
                let hik = dot(w, vi);
                ws.hess[i * ld + k] = hik;
                axpy(-hik, vi, w);
            }
            let hnext = norm(w);
            ws.hess[(k + 1) * ld + k] = hnext;
            rel = rotate_column(&mut ws.hess, ld, &mut ws.cs, &mut ws.sn, &mut ws.g, k) / bnorm;
            total += 1;
            k += 1;
            if !rel.is_finite() {
                return Err(Error::Breakdown {
                    solver: "gmres",
                    iterations: total,
                    reason: "non-finite Hessenberg entry".into(),
                });
            }
            if hnext <= 1e-300 {
                happy = true;
                break;
            }
            scale(1.0 / hnext, w);
            if rel <= rtol {
                break;
            }
        }
        let y = solve_upper(&ws.hess, ld, &ws.g, k);
        for (yi, vi) in y.iter().zip(&ws.basis) {
            axpy(*yi, vi, x);
        }
        if happy || rel <= rtol || total >= maxit {
            return Ok(KrylovOutcome {
                iterations: total,
                converged: happy || rel <= rtol,
                relative_residual: if happy { 0.0 } else { rel },
            });
        }
    }
}

/// Counters and residual history of one outer solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub outer_iterations: usize,
    /// Inner iterations spent on each multigrid level during this solve.
    pub smoother_iterations: Vec<usize>,
    /// True residual `|b - A x| / |b|` at exit.
    pub final_relative_residual: f64,
    pub converged: bool,
    pub wall_seconds: f64,
    /// Relative residual before the first iteration and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Flexible GMRES with right preconditioning.
///
/// Each preconditioned direction is stored, so the preconditioner may change
/// between iterations. Convergence is `|b - A x| <= rtol |b|`. `x` is the warm
/// start on entry.
pub fn fgmres<P: Preconditioner + ?Sized>(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &mut P,
    rtol: f64,
    maxit: usize,
    restart: usize,
) -> Result<SolverStats> {
    let start = Instant::now();
    let n = b.len();
    check_len("fgmres rhs", a.nrows(), n)?;
    check_len("fgmres iterate", a.ncols(), x.len())?;
    let restart = restart.max(1);
    let levels_before = precond.level_iterations();
    let mut stats = SolverStats::default();

    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        stats.converged = true;
        stats.residual_history.push(0.0);
        stats.wall_seconds = start.elapsed().as_secs_f64();
        return Ok(stats);
    }

    let ld = restart;
    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut hess = vec![0.0; (restart + 1) * restart];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut r = vec![0.0; n];
    let mut total = 0;

    loop {
        a.mul_into(x, &mut r);
        residual_in_place(b, &mut r);
        let beta = norm(&r);
        let rel0 = beta / bnorm;
        if !rel0.is_finite() {
            return Err(Error::Breakdown {
                solver: "fgmres",
                iterations: total,
                reason: "non-finite residual".into(),
            });
        }
        if stats.residual_history.is_empty() {
            stats.residual_history.push(rel0);
        } else if let Some(last) = stats.residual_history.last_mut() {
            // Replace the Arnoldi estimate with the true residual at restarts.
            *last = rel0;
        }
        if rel0 <= rtol || total >= maxit {
            stats.converged = rel0 <= rtol;
            stats.final_relative_residual = rel0;
            break;
        }
        if v.is_empty() {
            v.push(vec![0.0; n]);
        }
        v[0].copy_from_slice(&r);
        scale(1.0 / beta, &mut v[0]);
        hess.iter_mut().for_each(|h| *h = 0.0);
        g.iter_mut().for_each(|h| *h = 0.0);
        g[0] = beta;

        let mut k = 0;
        while k < restart && total < maxit {
            if z.len() <= k {
                z.push(vec![0.0; n]);
            }
            if v.len() <= k + 1 {
                v.push(vec![0.0; n]);
            }
            precond.apply(&v[k], &mut z[k])?;
            let (head, tail) = v.split_at_mut(k + 1);
            let w = &mut tail[0];
            a.mul_into(&z[k], w);
            for (i, vi) in head.iter().enumerate() {
                let hik = dot(w, vi);
                hess[i * ld + k] = hik;
                axpy(-hik, vi, w);
            }
            let hnext = norm(w);
            hess[(k + 1) * ld + k] = hnext;
            let est = rotate_column(&mut hess, ld, &mut cs, &mut sn, &mut g, k) / bnorm;
            total += 1;
            k += 1;
            if !est.is_finite() {
                return Err(Error::Breakdown {
                    solver: "fgmres",
                    iterations: total,
                    reason: "non-finite Hessenberg entry".into(),
                });
            }
            stats.residual_history.push(est);
            if hnext <= 1e-300 || est <= rtol {
                break;
            }
            scale(1.0 / hnext, w);
        }
        let y = solve_upper(&hess, ld, &g, k);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Breakdown {
                solver: "fgmres",
                iterations: total,
                reason: "singular least-squares system".into(),
            });
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, x);
        }
    }

    stats.outer_iterations = total;
    let levels_after = precond.level_iterations();
    stats.smoother_iterations = levels_after
        .iter()
        .enumerate()
        .map(|(l, &c)| c - levels_before.get(l).copied().unwrap_or(0))
        .collect();
    stats.wall_seconds = start.elapsed().as_secs_f64();
    Ok(stats)
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite systems.
/// Converges when `|b - A x| <= rtol |b|`.
pub fn cg_jacobi(
    a: &SparseMatrix,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    maxit: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    check_len("cg rhs", a.nrows(), n)?;
    check_len("cg iterate", a.ncols(), x.len())?;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovOutcome {
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.mul_into(x, &mut r);
    residual_in_place(b, &mut r);
    let mut zv = vec![0.0; n];
    hadamard(inv_diag, &r, &mut zv);
    let mut p = zv.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &zv);
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > rtol && it < maxit {
        a.mul_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Breakdown {
                solver: "cg",
                iterations: it,
                reason: format!("non-positive curvature p^T A p = {pq:e}"),
            });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        hadamard(inv_diag, &r, &mut zv);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&zv) {
            *pi = zi + beta * *pi;
        }
        rel = norm(&r) / bnorm;
        it += 1;
    }
    Ok(KrylovOutcome {
        iterations: it,
        converged: rel <= rtol,
        relative_residual: rel,
    })
}
