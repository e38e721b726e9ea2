//! Central finite-difference audit of the adjoint gradient.

use serde::Serialize;

use super::problem::SpaceTimeProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub variable: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub phi: f64,
    pub step: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_relative_error: f64,
}

/// Compares `d phi / d gamma` at `gamma` with `(phi(g + h e_i) - phi(g - h e_i)) / 2h` for each listed variable.
/// Warm starts are disabled for the duration so every solve is independent of the visiting order.
pub fn gradient_check(
    problem: &mut SpaceTimeProblem,
    gamma: &[f64],
    variables: &[usize],
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    if let Some(&v) = variables.iter().find(|&&v| v >= gamma.len()) {
        return Err(Error::InvalidArgument(format!(
            "variable {v} out of range ({} design variables)",
            gamma.len()
        )));
    }
    problem.set_warm_start(false);
    let out = (|| {
        let base = problem.evaluate(gamma, true)?;
        let grad = base.dphi.expect("gradient requested");
        let mut entries = Vec::with_capacity(variables.len());
        for &v in variables {
            let mut g = gamma.to_vec();
            g[v] = gamma[v] + step;
            let plus = problem.evaluate(&g, false)?.phi;
            g[v] = gamma[v] - step;
            let minus = problem.evaluate(&g, false)?.phi;
            let fd = (plus - minus) / (2.0 * step);
            let adjoint = grad[v];
            entries.push(GradCheckEntry {
                variable: v,
                adjoint,
                finite_difference: fd,
                relative_error: (adjoint - fd).abs() / fd.abs().max(f64::MIN_POSITIVE),
            });
        }
        let max_relative_error = entries.iter().fold(0.0f64, |m, e| m.max(e.relative_error));
        Ok(GradCheckReport {
            phi: base.phi,
            step,
            entries,
            max_relative_error,
        })
    })();
    problem.set_warm_start(true);
    out
}
