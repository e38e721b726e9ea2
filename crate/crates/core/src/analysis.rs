//! Post-processing metrics of optimised designs.

use serde::Serialize;

use crate::assembly::HeatSource;
use crate::error::{check_len, Error, Result};
use crate::mesh::SpaceTimeMesh;

/// Fraction of elements whose projected density lies strictly inside `(lo, hi)`.
pub fn intermediate_fraction(gamma_bar: &[f64], lo: f64, hi: f64) -> f64 {
    if gamma_bar.is_empty() {
        return 0.0;
    }
    gamma_bar.iter().filter(|&&g| g > lo && g < hi).count() as f64 / gamma_bar.len() as f64
}

/// Centroid of the elements above `threshold` in each time slab; `None` for empty slabs.
pub fn slab_centroids(mesh: &SpaceTimeMesh, gamma_bar: &[f64], threshold: f64) -> Result<Vec<Option<[f64; 2]>>> {
    check_len("slab centroid field", mesh.num_elements(), gamma_bar.len())?;
    let per = mesh.elements_per_slab();
    Ok(gamma_bar
        .chunks(per)
        .enumerate()
        .map(|(k, slab)| {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
            for (i, &g) in slab.iter().enumerate() {
                if g > threshold {
                    let c = mesh.element_center(k * per + i);
                    sx += c[0];
                    sy += c[1];
                    n += 1;
                }
            }
            (n > 0).then(|| [sx / n as f64, sy / n as f64])
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitTracking {
    /// `|mean exp(i (theta_centroid - theta_source))|` over slabs: 1 for a constant phase
    /// relation, near 0 for a centroid unrelated to the orbit.
    pub correlation: f64,
    /// Circular mean of `theta_centroid - theta_source` in radians.
    pub mean_lag: f64,
    pub slabs_used: usize,
}

/// Compares the angle of each slab centroid about the domain centre with the orbit angle of the
/// source at the slab's mid-time.
pub fn orbit_tracking(
    mesh: &SpaceTimeMesh,
    gamma_bar: &[f64],
    source: &HeatSource,
    threshold: f64,
) -> Result<OrbitTracking> {
    let (radius, omega) = match *source {
        HeatSource::OrbitingGaussian { radius, omega, .. } => (radius, omega),
        _ => return Err(Error::InvalidArgument("orbit tracking needs an orbiting source".into())),
    };
    let centroids = slab_centroids(mesh, gamma_bar, threshold)?;
    let (mut re, mut im, mut used) = (0.0, 0.0, 0usize);
    for (k, c) in centroids.iter().enumerate() {
        let Some(c) = c else { continue };
        let (dx, dy) = (c[0] - 0.5, c[1] - 0.5);
        if dx.hypot(dy) < 1e-12 {
            continue;
        }
        let t = (k as f64 + 0.5) * mesh.dt();
        let s = HeatSource::orbit_center(radius, omega, mesh.tau(), t);
        let d = dy.atan2(dx) - (s[1] - 0.5).atan2(s[0] - 0.5);
        re += d.cos();
        im += d.sin();
        used += 1;
    }
    if used == 0 {
        return Ok(OrbitTracking {
            correlation: 0.0,
            mean_lag: 0.0,
            slabs_used: 0,
        });
    }
    Ok(OrbitTracking {
        correlation: re.hypot(im) / used as f64,
        mean_lag: im.atan2(re),
        slabs_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::ProblemDefinition;

    #[test]
    fn intermediate_fraction_counts_open_interval() {
        assert_eq!(intermediate_fraction(&[0.0, 0.05, 0.5, 0.95, 1.0], 0.05, 0.95), 0.2);
        assert_eq!(intermediate_fraction(&[], 0.05, 0.95), 0.0);
    }

    /// Blob of material following the source centre with a fixed angular offset.
    fn blob(mesh: &SpaceTimeMesh, source: &HeatSource, offset: f64) -> Vec<f64> {
        let HeatSource::OrbitingGaussian { radius, omega, .. } = *source else { unreachable!() };
        (0..mesh.num_elements())
            .map(|e| {
                let c = mesh.element_center(e);
                let s = HeatSource::orbit_center(radius, omega, mesh.tau(), c[2]);
                let a = (s[1] - 0.5).atan2(s[0] - 0.5) + offset;
                let (bx, by) = (0.5 + radius * a.cos(), 0.5 + radius * a.sin());
                if (c[0] - bx).hypot(c[1] - by) < 0.1 { 1.0 } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn tracking_material_correlates_and_static_does_not() {
        let p = ProblemDefinition::example2();
        let mesh = SpaceTimeMesh::with_tau(32, 32, 64, p.tau).unwrap();
        let follow = orbit_tracking(&mesh, &blob(&mesh, &p.source, 0.0), &p.source, 0.5).unwrap();
        assert!(follow.correlation > 0.95, "{follow:?}");
        assert!(follow.mean_lag.abs() < 0.1);
        let lagged = orbit_tracking(&mesh, &blob(&mesh, &p.source, -0.5), &p.source, 0.5).unwrap();
        assert!(lagged.correlation > 0.95 && (lagged.mean_lag + 0.5).abs() < 0.1, "{lagged:?}");
        // A fixed blob to the right of the centre does not follow a source doing three orbits.
        let fixed: Vec<f64> = (0..mesh.num_elements())
            .map(|e| {
                let c = mesh.element_center(e);
                if (c[0] - 0.75).hypot(c[1] - 0.5) < 0.1 { 1.0 } else { 0.0 }
            })
            .collect();
        let still = orbit_tracking(&mesh, &fixed, &p.source, 0.5).unwrap();
        assert!(still.correlation < 0.2, "{still:?}");
    }
}
