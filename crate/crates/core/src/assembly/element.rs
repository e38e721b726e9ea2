//! Trilinear space-time element integrals on a `dx x dx x dt` brick.

use crate::error::{Error, Result};
use crate::mesh::CORNERS;

pub type Mat8 = [[f64; 8]; 8];

/// Gauss points and weights of the 2-point rule on `[0, 1]`.
pub const GAUSS_1D: [(f64, f64); 2] = [
    (0.5 - 0.288_675_134_594_812_9, 0.5),
    (0.5 + 0.288_675_134_594_812_9, 0.5),
];

/// Trilinear shape function values at local coordinates in `[0, 1]^3`.
pub fn shape_values(s: [f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = (0..3)
            .map(|d| if c[d] == 1 { s[d] } else { 1.0 - s[d] })
            .product();
    }
    n
}

/// Shape function gradients with respect to local coordinates.
pub fn shape_gradients(s: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, c) in CORNERS.iter().enumerate() {
        for d in 0..3 {
            g[a][d] = (0..3)
                .map(|e| {
                    let v = if c[e] == 1 { s[e] } else { 1.0 - s[e] };
                    let dv = if c[e] == 1 { 1.0 } else { -1.0 };
                    if e == d {
                        dv
                    } else {
                        v
                    }
                })
                .product();
        }
    }
    g
}

/// The 2x2x2 Gauss points in local coordinates with their weights.
pub fn gauss_points() -> impl Iterator<Item = ([f64; 3], f64)> {
    GAUSS_1D.iter().flat_map(move |&(z, wz)| {
        GAUSS_1D.iter().flat_map(move |&(y, wy)| {
            GAUSS_1D.iter().map(move |&(x, wx)| ([x, y, z], wx * wy * wz))
        })
    })
}

/// Coefficient-free element integrals for one brick size.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementOperatorSet {
    pub dx: f64,
    pub dt: f64,
    /// `int N_a dN_b/dt`
    pub g_t: Mat8,
    /// `int grad_x N_a . grad_x N_b`
    pub k_xy: Mat8,
    /// `int dN_a/dt dN_b/dt`
    pub k_t: Mat8,
    /// `int N_a N_b`
    pub m: Mat8,
    /// `int N_a`
    pub f_unit: [f64; 8],
}

impl ElementOperatorSet {
    pub fn new(dx: f64, dt: f64) -> Self {
        let mut set = Self {
            dx,
            dt,
            g_t: [[0.0; 8]; 8],
            k_xy: [[0.0; 8]; 8],
            k_t: [[0.0; 8]; 8],
            m: [[0.0; 8]; 8],
            f_unit: [0.0; 8],
        };
        let jac = dx * dx * dt;
        let inv = [1.0 / dx, 1.0 / dx, 1.0 / dt];
        for (s, w) in gauss_points() {
            let n = shape_values(s);
            let mut g = shape_gradients(s);
            for ga in g.iter_mut() {
                for d in 0..3 {
                    ga[d] *= inv[d];
                }
            }
            let wj = w * jac;
            for a in 0..8 {
                set.f_unit[a] += wj * n[a];
                for b in 0..8 {
                    set.g_t[a][b] += wj * n[a] * g[b][2];
                    set.k_xy[a][b] += wj * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    set.k_t[a][b] += wj * g[a][2] * g[b][2];
                    set.m[a][b] += wj * n[a] * n[b];
                }
            }
        }
        set
    }

    /// Row `a` of the stabilised element matrix `C G_t + k K_xy + k_ad K_t`.
    #[inline]
    pub fn system_row(&self, c: f64, k: f64, a: usize) -> [f64; 8] {
        let kad = artificial_diffusion(c, self.dt);
        let mut row = [0.0; 8];
        for (b, r) in row.iter_mut().enumerate() {
            *r = c * self.g_t[a][b] + k * self.k_xy[a][b] + kad * self.k_t[a][b];
        }
        row
    }

    /// Full stabilised element matrix.
    pub fn system_matrix(&self, c: f64, k: f64) -> Mat8 {
        let mut out = [[0.0; 8]; 8];
        for (a, row) in out.iter_mut().enumerate() {
            *row = self.system_row(c, k, a);
        }
        out
    }

    /// `(lambda^T G_t s, lambda^T K_xy s, lambda^T K_t s)` for one element.
    #[inline]
    pub fn bilinear_parts(&self, lambda: &[f64; 8], s: &[f64; 8]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..8 {
            if lambda[a] == 0.0 {
                continue;
            }
            let (mut g, mut kx, mut kt) = (0.0, 0.0, 0.0);
            for b in 0..8 {
                g += self.g_t[a][b] * s[b];
                kx += self.k_xy[a][b] * s[b];
                kt += self.k_t[a][b] * s[b];
            }
            out[0] += lambda[a] * g;
            out[1] += lambda[a] * kx;
            out[2] += lambda[a] * kt;
        }
        out
    }
}

/// Time-direction artificial diffusion that makes the element Peclet number one.
#[inline]
pub fn artificial_diffusion(c: f64, dt: f64) -> f64 {
    0.5 * c * dt
}

/// Element time-direction Peclet number `C dt / (2 k_ad)`.
pub fn time_peclet(c: f64, dt: f64) -> f64 {
    c * dt / (2.0 * artificial_diffusion(c, dt))
}

/// Stabilised element matrix for capacity `c` and conductivity `k`.
pub fn element_matrix(c: f64, k: f64, dx: f64, dt: f64) -> Result<Mat8> {
    if !(c > 0.0 && k > 0.0 && dx > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "element coefficients and sizes must be positive: C={c}, k={k}, dx={dx}, dt={dt}"
        )));
    }
    Ok(ElementOperatorSet::new(dx, dt).system_matrix(c, k))
}
