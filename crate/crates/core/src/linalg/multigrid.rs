//! Geometric space-time multigrid: transfer operators, Galerkin coarse
//! operators and the GMRES-smoothed V-cycle used to precondition FGMRES.

use serde::{Deserialize, Serialize};

use super::krylov::{fgmres, gmres_jacobi, inverse_diagonal, GmresWorkspace, Preconditioner, SolverStats};
use super::sparse::SparseMatrix;
use super::vector::{axpy, residual_in_place};
use crate::error::{check_len, Error, Result};
use crate::hierarchy::{GridLevel, Hierarchy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub outer_rtol: f64,
    pub outer_maxit: usize,
    pub outer_restart: usize,
    pub smoother_rtol: f64,
    /// Iteration cap for each of the pre- and post-smoothing sweeps.
    pub smoother_maxit: usize,
    pub coarse_rtol: f64,
    pub coarse_maxit: usize,
    pub coarse_restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_rtol: 1e-5,
            outer_maxit: 200,
            outer_restart: 200,
            smoother_rtol: 1e-6,
            smoother_maxit: 10,
            coarse_rtol: 1e-6,
            coarse_maxit: 200,
            // Restarting the coarse solve stalls on time-dominated coarse grids.
            coarse_restart: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("outer_rtol", self.outer_rtol),
            ("smoother_rtol", self.smoother_rtol),
            ("coarse_rtol", self.coarse_rtol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                errs.push(format!("solver.{name} must lie in (0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("outer_maxit", self.outer_maxit),
            ("outer_restart", self.outer_restart),
            ("smoother_maxit", self.smoother_maxit),
            ("coarse_maxit", self.coarse_maxit),
            ("coarse_restart", self.coarse_restart),
        ] {
            if v < 1 {
                errs.push(format!("solver.{name} must be >= 1"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// 1D interpolation weights from a coarse line of `nc` elements to `factor * nc`.
fn line_weights(nc: usize, factor: usize) -> Vec<Vec<(usize, f64)>> {
    let nf = nc * factor;
    (0..=nf)
        .map(|i| {
            if factor == 1 {
                vec![(i, 1.0)]
            } else if i % 2 == 0 {
                vec![(i / 2, 1.0)]
            } else {
                vec![(i / 2, 0.5), (i / 2 + 1, 0.5)]
            }
        })
        .collect()
}

fn ratio(fine: usize, coarse: usize, what: &str) -> Result<usize> {
    match fine {
        f if f == coarse => Ok(1),
        f if f == 2 * coarse => Ok(2),
        _ => Err(Error::InvalidArgument(format!(
            "levels are not adjacent in {what}: {fine} fine vs {coarse} coarse elements"
        ))),
    }
}

/// Interpolation from `coarse` nodal vectors to `fine` ones: tensor product of
/// linear interpolation in the halved directions and identity elsewhere.
pub fn build_prolongation(fine: &GridLevel, coarse: &GridLevel) -> Result<SparseMatrix> {
    let rx = ratio(fine.nx, coarse.nx, "x1")?;
    let ry = ratio(fine.ny, coarse.ny, "x2")?;
    let rt = ratio(fine.nt, coarse.nt, "t")?;
    if rx != ry {
        return Err(Error::InvalidArgument("spatial directions must be coarsened together".into()));
    }
    let wx = line_weights(coarse.nx, rx);
    let wy = line_weights(coarse.ny, ry);
    let wt = line_weights(coarse.nt, rt);
    let (cx, cy) = (coarse.nx + 1, coarse.ny + 1);

    let nrows = fine.num_nodes();
    let mut row_ptr = Vec::with_capacity(nrows + 1);
    let mut cols = Vec::with_capacity(nrows * 2);
    let mut vals = Vec::with_capacity(nrows * 2);
    row_ptr.push(0);
    for lt in &wt {
        for ly in &wy {
            for lx in &wx {
                // Outer loops over the slowest coarse index keep columns sorted.
                for &(kt, a) in lt {
                    for &(ky, b) in ly {
                        for &(kx, c) in lx {
                            cols.push(((kt * cy + ky) * cx + kx) as u32);
                            vals.push(a * b * c);
                        }
                    }
                }
                row_ptr.push(cols.len());
            }
        }
    }
    SparseMatrix::from_csr(nrows, coarse.num_nodes(), row_ptr, cols, vals)
}

/// Galerkin coarse operator `P^T (J P)`.
pub fn galerkin(j: &SparseMatrix, p: &SparseMatrix) -> Result<SparseMatrix> {
    check_len("galerkin operator columns", j.ncols(), p.nrows())?;
    let jp = j.matmul(p)?;
    p.transpose().matmul(&jp)
}

#[derive(Debug, Clone)]
struct Level {
    a: SparseMatrix,
    inv_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Transfer {
    prolong: SparseMatrix,
    restrict: SparseMatrix,
}

#[derive(Debug, Clone, Default)]
struct LevelWork {
    gmres: GmresWorkspace,
    b: Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
}

/// Operator stack plus the mutable scratch of the V-cycle.
#[derive(Debug, Clone)]
pub struct Multigrid {
    levels: Vec<Level>,
    transfers: Vec<Transfer>,
    config: SolverConfig,
    work: Vec<LevelWork>,
    iterations: Vec<usize>,
}

impl Multigrid {
    /// Builds prolongations from `hierarchy` and coarse operators by Galerkin projection of `fine`.
    pub fn new(fine: SparseMatrix, hierarchy: &Hierarchy, config: SolverConfig) -> Result<Self> {
        let lv = hierarchy.levels();
        check_len("multigrid fine operator", lv[0].num_nodes(), fine.nrows())?;
        let mut prolongations = Vec::with_capacity(lv.len().saturating_sub(1));
        for w in lv.windows(2) {
            prolongations.push(build_prolongation(&w[0], &w[1])?);
        }
        let mut ops = vec![fine];
        for p in &prolongations {
            let coarse = galerkin(ops.last().expect("non-empty"), p)?;
            ops.push(coarse);
        }
        Self::assemble(ops, prolongations, config)
    }

    /// Uses caller-provided operators and prolongations; `prolongations[l]` maps level `l+1` to `l`.
    pub fn from_parts(ops: Vec<SparseMatrix>, prolongations: Vec<SparseMatrix>, config: SolverConfig) -> Result<Self> {
        if ops.is_empty() || prolongations.len() + 1 != ops.len() {
            return Err(Error::InvalidArgument(format!(
                "need one prolongation per level pair: {} operators, {} prolongations",
                ops.len(),
                prolongations.len()
            )));
        }
        for (l, p) in prolongations.iter().enumerate() {
            check_len("prolongation rows", ops[l].nrows(), p.nrows())?;
            check_len("prolongation columns", ops[l + 1].nrows(), p.ncols())?;
        }
        Self::assemble(ops, prolongations, config)
    }

    fn assemble(ops: Vec<SparseMatrix>, prolongations: Vec<SparseMatrix>, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let levels = ops
            .into_iter()
            .map(|a| {
                if a.nrows() != a.ncols() {
                    return Err(Error::Dimension {
                        context: "multigrid operator must be square",
                        expected: a.nrows(),
                        actual: a.ncols(),
                    });
                }
                let inv_diag = inverse_diagonal(&a)?;
                Ok(Level { a, inv_diag })
            })
            .collect::<Result<Vec<_>>>()?;
        let transfers = prolongations
            .into_iter()
            .map(|p| Transfer {
                restrict: p.transpose(),
                prolong: p,
            })
            .collect();
        let work = levels
            .iter()
            .map(|l| LevelWork {
                b: vec![0.0; l.a.nrows()],
                x: vec![0.0; l.a.nrows()],
                r: vec![0.0; l.a.nrows()],
                ..Default::default()
            })
            .collect();
        let n = levels.len();
        Ok(Self {
            levels,
            transfers,
            config,
            work,
            iterations: vec![0; n],
        })
    }

    /// Hierarchy for the transposed system: every level operator transposed, transfers shared.
    pub fn transposed(&self) -> Result<Self> {
        let ops = self.levels.iter().map(|l| l.a.transpose()).collect();
        let ps = self.transfers.iter().map(|t| t.prolong.clone()).collect();
        Self::from_parts(ops, ps, self.config)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
    pub fn operator(&self, level: usize) -> &SparseMatrix {
        &self.levels[level].a
    }
    pub fn prolongation(&self, level: usize) -> &SparseMatrix {
        &self.transfers[level].prolong
    }
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }
    pub fn config_mut(&mut self) -> &mut SolverConfig {
        &mut self.config
    }
    /// Cumulative inner GMRES iterations per level since construction.
    pub fn level_iterations(&self) -> &[usize] {
        &self.iterations
    }

    /// One V-cycle applied to residual `r`; `z` receives the correction.
    pub fn vcycle(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        check_len("vcycle residual", self.levels[0].a.nrows(), r.len())?;
        check_len("vcycle correction", r.len(), z.len())?;
        let mut cycle = VCycle {
            levels: &self.levels,
            transfers: &self.transfers,
            config: &self.config,
            work: &mut self.work,
            iterations: &mut self.iterations,
        };
        cycle.run(0, r, z)
    }

    /// FGMRES on the finest operator, preconditioned by one V-cycle per iteration.
    /// `x` is the warm start.
    pub fn solve(&mut self, b: &[f64], x: &mut [f64]) -> Result<SolverStats> {
        let cfg = self.config;
        let mut cycle = VCycle {
            levels: &self.levels,
            transfers: &self.transfers,
            config: &self.config,
            work: &mut self.work,
            iterations: &mut self.iterations,
        };
        fgmres(&self.levels[0].a, b, x, &mut cycle, cfg.outer_rtol, cfg.outer_maxit, cfg.outer_restart)
    }
}

struct VCycle<'a> {
    levels: &'a [Level],
    transfers: &'a [Transfer],
    config: &'a SolverConfig,
    work: &'a mut [LevelWork],
    iterations: &'a mut [usize],
}

impl VCycle<'_> {
    fn run(&mut self, l: usize, b: &[f64], x: &mut [f64]) -> Result<()> {
        let lev = &self.levels[l];
        let cfg = self.config;
        x.iter_mut().for_each(|v| *v = 0.0);
        if l + 1 == self.levels.len() {
            let out = gmres_jacobi(
                &lev.a,
                &lev.inv_diag,
                b,
                x,
                cfg.coarse_rtol,
                cfg.coarse_maxit,
                cfg.coarse_restart,
                &mut self.work[l].gmres,
            )?;
            self.iterations[l] += out.iterations;
            return Ok(());
        }
        let smooth = |x: &mut [f64], ws: &mut GmresWorkspace| {
            gmres_jacobi(
                &lev.a,
                &lev.inv_diag,
                b,
                x,
                cfg.smoother_rtol,
                cfg.smoother_maxit,
                cfg.smoother_maxit,
                ws,
            )
        };
        let pre = smooth(x, &mut self.work[l].gmres)?;
        self.iterations[l] += pre.iterations;

        let mut r = std::mem::take(&mut self.work[l].r);
        lev.a.mul_into(x, &mut r);
        residual_in_place(b, &mut r);
        let mut bc = std::mem::take(&mut self.work[l + 1].b);
        let mut xc = std::mem::take(&mut self.work[l + 1].x);
        self.transfers[l].restrict.mul_into(&r, &mut bc);
        let res = self.run(l + 1, &bc, &mut xc);
        if res.is_ok() {
            self.transfers[l].prolong.mul_into(&xc, &mut r);
            axpy(1.0, &r, x);
        }
        self.work[l].r = r;
        self.work[l + 1].b = bc;
        self.work[l + 1].x = xc;
        res?;

        let post = smooth(x, &mut self.work[l].gmres)?;
        self.iterations[l] += post.iterations;
        Ok(())
    }
}

impl Preconditioner for VCycle<'_> {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        self.run(0, r, z)
    }

    fn level_iterations(&self) -> Vec<usize> {
        self.iterations.to_vec()
    }
}

impl Preconditioner for Multigrid {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) -> Result<()> {
        self.vcycle(r, z)
    }

    fn level_iterations(&self) -> Vec<usize> {
        self.iterations.clone()
    }
}
