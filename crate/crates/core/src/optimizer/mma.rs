//! Method of Moving Asymptotes for one inequality constraint and box bounds
//! `[0, 1]`. The separable subproblem is solved through its one-dimensional
//! dual by bisection on the multiplier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const XMIN: f64 = 0.0;
const XMAX: f64 = 1.0;
const RANGE: f64 = XMAX - XMIN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmaConfig {
    pub move_limit: f64,
    /// Initial asymptote distance as a fraction of the bound range.
    pub asymptote_init: f64,
    pub asymptote_decrease: f64,
    pub asymptote_increase: f64,
    /// Divide the initial asymptote distance by the projection sharpness.
    pub asymptote_beta_scaling: bool,
    pub dual_tol: f64,
}

impl Default for MmaConfig {
    fn default() -> Self {
        Self {
            move_limit: 0.2,
            asymptote_init: 0.2,
            asymptote_decrease: 0.7,
            asymptote_increase: 1.2,
            asymptote_beta_scaling: false,
            dual_tol: 1e-9,
        }
    }
}

impl MmaConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            errs.push(format!("mma.move_limit must lie in (0, 1], got {}", self.move_limit));
        }
        if !(self.asymptote_init > 0.0) {
            errs.push(format!("mma.asymptote_init must be positive, got {}", self.asymptote_init));
        }
        if !(self.asymptote_decrease > 0.0 && self.asymptote_decrease < 1.0) {
            errs.push(format!("mma.asymptote_decrease must lie in (0, 1), got {}", self.asymptote_decrease));
        }
        if !(self.asymptote_increase >= 1.0) {
            errs.push(format!("mma.asymptote_increase must be >= 1, got {}", self.asymptote_increase));
        }
        if !(self.dual_tol > 0.0) {
            errs.push(format!("mma.dual_tol must be positive, got {}", self.dual_tol));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Multiplier of the approximated constraint, with both gradients rescaled to unit max-norm.
    pub lambda: f64,
    /// False when the approximated constraint could not be met inside the move limits;
    /// `x` is then the point minimising the approximated constraint.
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct Mma {
    n: usize,
    config: MmaConfig,
    init_scale: f64,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iter: usize,
}

/// Per-variable data of the convex approximation.
struct Approx {
    low: f64,
    upp: f64,
    alpha: f64,
    beta: f64,
    p0: f64,
    q0: f64,
    p1: f64,
    q1: f64,
}

impl Approx {
    #[inline]
    fn argmin(&self, lambda: f64) -> f64 {
        let sp = (self.p0 + lambda * self.p1).sqrt();
        let sq = (self.q0 + lambda * self.q1).sqrt();
        ((sp * self.low + sq * self.upp) / (sp + sq)).clamp(self.alpha, self.beta)
    }

    #[inline]
    fn constraint_term(&self, x: f64) -> f64 {
        self.p1 / (self.upp - x) + self.q1 / (x - self.low)
    }
}

/// `1 / max|v|`, or 1 for an all-zero vector.
fn inv_max_abs(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        1.0 / m
    } else {
        1.0
    }
}

impl Mma {
    /// `beta` is the projection sharpness, used only when `asymptote_beta_scaling` is set.
    pub fn new(n: usize, config: MmaConfig, beta: f64) -> Result<Self> {
        config.validate()?;
        let init_scale = if config.asymptote_beta_scaling { 1.0 / beta } else { 1.0 };
        Ok(Self {
            n,
            config,
            init_scale,
            low: vec![XMIN; n],
            upp: vec![XMAX; n],
            xold1: Vec::new(),
            xold2: Vec::new(),
            iter: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// One MMA step from `x` with objective gradient `df`, constraint value `g` (feasible when `<= 0`)
    /// and constraint gradient `dg`.
    pub fn update(&mut self, x: &[f64], df: &[f64], g: f64, dg: &[f64]) -> Result<MmaStep> {
        check_len("mma design", self.n, x.len())?;
        check_len("mma objective gradient", self.n, df.len())?;
        check_len("mma constraint gradient", self.n, dg.len())?;
        if df.iter().chain(dg).any(|v| !v.is_finite()) || !g.is_finite() {
            return Err(Error::InvalidArgument("non-finite gradient passed to MMA".into()));
        }
        self.iter += 1;
        let cfg = self.config;
        let init = cfg.asymptote_init * self.init_scale * RANGE;
        if self.iter <= 2 {
            for j in 0..self.n {
                self.low[j] = x[j] - init;
                self.upp[j] = x[j] + init;
            }
        } else {
            for j in 0..self.n {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let f = if trend < 0.0 {
                    cfg.asymptote_decrease
                } else if trend > 0.0 {
                    cfg.asymptote_increase
                } else {
                    1.0
                };
                let low = x[j] - f * (self.xold1[j] - self.low[j]);
                let upp = x[j] + f * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * RANGE, x[j] - 0.01 * RANGE);
                self.upp[j] = upp.clamp(x[j] + 0.01 * RANGE, x[j] + 10.0 * RANGE);
            }
        }

        // The 1e-5 regularisation is absolute, so both functions are rescaled to unit
        // max-norm gradients. The minimiser is unchanged; only `lambda` is in scaled units.
        let sf = inv_max_abs(df);
        let sg = inv_max_abs(dg);
        let g = g * sg;
        let approx: Vec<Approx> = (0..self.n)
            .into_par_iter()
            .map(|j| {
                let (low, upp) = (self.low[j], self.upp[j]);
                let alpha = XMIN.max(low + 0.1 * (x[j] - low)).max(x[j] - cfg.move_limit * RANGE);
                let beta = XMAX.min(upp - 0.1 * (upp - x[j])).min(x[j] + cfg.move_limit * RANGE);
                let (ux2, xl2) = ((upp - x[j]).powi(2), (x[j] - low).powi(2));
                let terms = |d: f64| {
                    let (pos, neg) = (d.max(0.0), (-d).max(0.0));
                    (
                        ux2 * (1.001 * pos + 0.001 * neg + 1e-5 / RANGE),
                        xl2 * (0.001 * pos + 1.001 * neg + 1e-5 / RANGE),
                    )
                };
                let (p0, q0) = terms(df[j] * sf);
                let (p1, q1) = terms(dg[j] * sg);
                Approx {
                    low,
                    upp,
                    alpha,
                    beta,
                    p0,
                    q0,
                    p1,
                    q1,
                }
            })
            .collect();
        // Constant making the approximation exact at x.
        let r1 = g - approx
            .iter()
            .zip(x)
            .map(|(a, &xj)| a.constraint_term(xj))
            .sum::<f64>();
        let constraint = |lambda: f64| -> f64 {
            r1 + approx
                .par_iter()
                .map(|a| a.constraint_term(a.argmin(lambda)))
                .sum::<f64>()
        };

        let (lambda, feasible) = if constraint(0.0) <= 0.0 {
            (0.0, true)
        } else {
            let mut hi = 1.0;
            while constraint(hi) > 0.0 && hi < 1e15 {
                hi *= 10.0;
            }
            if constraint(hi) > 0.0 {
                (f64::INFINITY, false)
            } else {
                let mut lo = 0.0;
                while hi - lo > cfg.dual_tol * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if constraint(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (hi, true)
            }
        };

        let xnew: Vec<f64> = if feasible {
            approx.par_iter().map(|a| a.argmin(lambda)).collect()
        } else {
            log::warn!("MMA subproblem infeasible within move limits; taking the constraint-minimising point");
            approx
                .iter()
                .map(|a| {
                    // Minimiser of the separable constraint approximation on [alpha, beta].
                    if a.p1 == 0.0 && a.q1 == 0.0 {
                        return a.argmin(0.0);
                    }
                    let (sp, sq) = (a.p1.sqrt(), a.q1.sqrt());
                    ((sp * a.low + sq * a.upp) / (sp + sq)).clamp(a.alpha, a.beta)
                })
                .collect()
        };

        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(MmaStep {
            x: xnew,
            lambda: if feasible { lambda } else { f64::NAN },
            feasible,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_point_is_kept() {
        let mut mma = Mma::new(5, MmaConfig::default(), 32.0).unwrap();
        let x = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        let step = mma.update(&x, &[0.0; 5], -0.2, &[0.2; 5]).unwrap();
        for (a, b) in step.x.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn descent_direction_increases_all_variables() {
        let mut mma = Mma::new(4, MmaConfig::default(), 32.0).unwrap();
        let x = vec![0.2, 0.4, 0.6, 0.8];
        let step = mma.update(&x, &[-1.0, -2.0, -0.5, -3.0], -0.5, &[0.01; 4]).unwrap();
        for (a, b) in step.x.iter().zip(&x) {
            assert!(a > b);
        }
    }

    #[test]
    fn converges_to_kkt_point_of_small_qp() {
        // min (x1 - 0.8)^2 + (x2 - 0.9)^2  s.t.  x1 + x2 <= 1, with solution (0.45, 0.55).
        let mut mma = Mma::new(2, MmaConfig::default(), 32.0).unwrap();
        let mut x = vec![0.5, 0.5];
        let mut iters = 0;
        for _ in 0..50 {
            let df = [2.0 * (x[0] - 0.8), 2.0 * (x[1] - 0.9)];
            let step = mma.update(&x, &df, x[0] + x[1] - 1.0, &[1.0, 1.0]).unwrap();
            let change = (step.x[0] - x[0]).abs().max((step.x[1] - x[1]).abs());
            x = step.x;
            iters += 1;
            if change < 1e-9 {
                break;
            }
        }
        assert!((x[0] - 0.45).abs() < 1e-6 && (x[1] - 0.55).abs() < 1e-6, "{x:?} after {iters}");
    }

    #[test]
    fn infeasible_subproblem_is_flagged() {
        let mut mma = Mma::new(3, MmaConfig::default(), 32.0).unwrap();
        // Needs a sum reduction far beyond the move limit. The lower asymptote
        // starts at 0.7, so the lower step bound is 0.7 + 0.1 * 0.2.
        let step = mma.update(&[0.9; 3], &[0.0; 3], 5.0, &[1.0; 3]).unwrap();
        assert!(!step.feasible);
        assert!(step.x.iter().all(|v| (v - 0.72).abs() < 1e-12), "{:?}", step.x);
    }

    #[test]
    fn step_is_invariant_to_gradient_scale() {
        let x = vec![0.3; 4];
        let df = [-3.0, -1.0, -2.0, -0.5];
        let dg = [0.25; 4];
        let base = Mma::new(4, MmaConfig::default(), 32.0).unwrap().update(&x, &df, 0.0, &dg).unwrap();
        let tiny: Vec<f64> = df.iter().map(|d| d * 1e-10).collect();
        let small_dg: Vec<f64> = dg.iter().map(|d| d * 1e-6).collect();
        let scaled = Mma::new(4, MmaConfig::default(), 32.0)
            .unwrap()
            .update(&x, &tiny, 0.0, &small_dg)
            .unwrap();
        for (a, b) in base.x.iter().zip(&scaled.x) {
            assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", base.x, scaled.x);
        }
        // Material moves towards the steepest descent variables.
        assert!(base.x[0] > 0.3 && base.x[3] < 0.3, "{:?}", base.x);
    }

    #[test]
    fn bounds_hold() {
        let mut mma = Mma::new(3, MmaConfig::default(), 32.0).unwrap();
        let mut x = vec![0.05, 0.5, 0.95];
        for k in 0..10 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let step = mma.update(&x, &[sign, -sign, sign * 10.0], -0.1, &[0.1; 3]).unwrap();
            assert!(step.x.iter().all(|v| (0.0..=1.0).contains(v)));
            x = step.x;
        }
    }
}
