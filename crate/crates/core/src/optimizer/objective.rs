//! p-norm of element-averaged temperature and the volume constraint.

use rayon::prelude::*;

use crate::assembly::{element_values, gather_element_vectors};
use crate::error::{check_len, Error, Result};
use crate::mesh::SpaceTimeMesh;

/// Element means of a nodal field.
pub fn element_averages(mesh: &SpaceTimeMesh, nodal: &[f64]) -> Result<Vec<f64>> {
    check_len("nodal field", mesh.num_nodes(), nodal.len())?;
    Ok((0..mesh.num_elements())
        .into_par_iter()
        .map(|e| element_values(mesh, nodal, e).iter().sum::<f64>() / 8.0)
        .collect())
}

/// `(sum_e v_e^p)^(1/p)` computed after scaling by the largest magnitude, so
/// large `p` neither overflows nor underflows. Also returns `d phi / d v_e`.
pub fn p_norm(values: &[f64], p: u32) -> Result<(f64, Vec<f64>)> {
    if p == 0 {
        return Err(Error::InvalidArgument("p-norm exponent must be >= 1".into()));
    }
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Ok((0.0, vec![0.0; values.len()]));
    }
    let pi = p as i32;
    let theta: f64 = values.iter().map(|v| (v / m).powi(pi)).sum();
    if !(theta > 0.0) {
        // Odd p with cancelling signs: the norm is undefined.
        return Err(Error::InvalidArgument(format!(
            "p-norm with p = {p} is undefined for these values (sum of powers {theta})"
        )));
    }
    let phi = m * theta.powf(1.0 / p as f64);
    let grad = values.par_iter().map(|v| (v / phi).powi(pi - 1)).collect();
    Ok((phi, grad))
}

/// p-norm objective of element-averaged temperatures and its gradient with respect to the nodal state.
pub fn objective(mesh: &SpaceTimeMesh, state: &[f64], p: u32) -> Result<(f64, Vec<f64>)> {
    let avg = element_averages(mesh, state)?;
    let (phi, dphi_davg) = p_norm(&avg, p)?;
    let local: Vec<[f64; 8]> = dphi_davg.par_iter().map(|d| [d / 8.0; 8]).collect();
    Ok((phi, gather_element_vectors(mesh, &local)?))
}

/// `chi = sum_e gamma_e v_e / (v_f |domain|) - 1` over space-time elements, and `d chi / d gamma_e`.
pub fn volume_constraint(mesh: &SpaceTimeMesh, gamma: &[f64], volume_fraction: f64) -> Result<(f64, Vec<f64>)> {
    check_len("volume constraint field", mesh.num_elements(), gamma.len())?;
    let w = mesh.element_volume() / (volume_fraction * mesh.domain_volume());
    let chi = gamma.iter().sum::<f64>() * w - 1.0;
    Ok((chi, vec![w; gamma.len()]))
}
