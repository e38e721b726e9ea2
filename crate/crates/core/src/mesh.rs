//! Regular (2+1)D space-time grid and material constants.
//!
//! Nodes are numbered lexicographically with `x` fastest, then `y`, then `t`.
//! Elements follow the same ordering. Time is rescaled to `[0, 1]` and space
//! to the unit square, so `dx = 1 / nx` and `dt = 1 / nt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local corner offsets `(i, j, k)` of the eight element nodes, indexed as `i + 2j + 4k`.
pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeMesh {
    nx: usize,
    ny: usize,
    nt: usize,
    /// Final physical time; only used to rescale coefficients and source timing.
    tau: f64,
}

impl SpaceTimeMesh {
    pub fn new(nx: usize, ny: usize, nt: usize) -> Result<Self> {
        Self::with_tau(nx, ny, nt, 1.0)
    }

    pub fn with_tau(nx: usize, ny: usize, nt: usize, tau: f64) -> Result<Self> {
        if nx != ny {
            return Err(Error::Mesh(format!(
                "spatial elements must be square: nx = {nx} but ny = {ny}"
            )));
        }
        if nx < 2 || nt < 2 {
            return Err(Error::Mesh(format!(
                "every direction needs at least 2 elements, got {nx}x{ny}x{nt}"
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::Mesh(format!("final time must be positive, got {tau}")));
        }
        Ok(Self { nx, ny, nt, tau })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nt)
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }
    pub fn dt(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny * self.nt
    }
    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * (self.nt + 1)
    }
    /// Nodes in one constant-time plane.
    pub fn nodes_per_slab(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }
    /// Elements in one time slab.
    pub fn elements_per_slab(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.ny + 1) + j) * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ijk(&self, n: usize) -> (usize, usize, usize) {
        let i = n % (self.nx + 1);
        let j = (n / (self.nx + 1)) % (self.ny + 1);
        let k = n / self.nodes_per_slab();
        (i, j, k)
    }

    /// Rescaled coordinates `(x1, x2, t)` of a node.
    pub fn node_coords(&self, n: usize) -> [f64; 3] {
        let (i, j, k) = self.node_ijk(n);
        [i as f64 * self.dx(), j as f64 * self.dx(), k as f64 * self.dt()]
    }

    #[inline]
    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn element_ijk(&self, e: usize) -> (usize, usize, usize) {
        let i = e % self.nx;
        let j = (e / self.nx) % self.ny;
        let k = e / self.elements_per_slab();
        (i, j, k)
    }

    /// The eight corner nodes of element `e`, in [`CORNERS`] order.
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let (i, j, k) = self.element_ijk(e);
        let base = self.node_index(i, j, k);
        let sx = 1;
        let sy = self.nx + 1;
        let st = self.nodes_per_slab();
        [
            base,
            base + sx,
            base + sy,
            base + sy + sx,
            base + st,
            base + st + sx,
            base + st + sy,
            base + st + sy + sx,
        ]
    }

    /// Lower corner `(x1, x2, t)` of an element.
    pub fn element_origin(&self, e: usize) -> [f64; 3] {
        let (i, j, k) = self.element_ijk(e);
        [i as f64 * self.dx(), j as f64 * self.dx(), k as f64 * self.dt()]
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let o = self.element_origin(e);
        [o[0] + 0.5 * self.dx(), o[1] + 0.5 * self.dx(), o[2] + 0.5 * self.dt()]
    }

    /// Space-time volume `dx^2 dt` of every element.
    pub fn element_volume(&self) -> f64 {
        self.dx() * self.dx() * self.dt()
    }

    /// Total space-time volume of the (rescaled) domain.
    pub fn domain_volume(&self) -> f64 {
        self.element_volume() * self.num_elements() as f64
    }
}

/// Material constants of the two phases plus the interpolation exponents.
///
/// Conductivities are stored both as given and rescaled with `k * tau / L^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialSet {
    pub c_ins: f64,
    pub c_con: f64,
    pub k_ins: f64,
    pub k_con: f64,
    pub p_c: f64,
    pub p_k: f64,
    pub tau: f64,
    pub length: f64,
}

impl Default for MaterialSet {
    fn default() -> Self {
        Self {
            c_ins: 0.5,
            c_con: 1.0,
            k_ins: 0.03,
            k_con: 3.0,
            p_c: 2.0,
            p_k: 3.0,
            tau: 1.0,
            length: 1.0,
        }
    }
}

impl MaterialSet {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn k_tilde_ins(&self) -> f64 {
        self.k_ins * self.tau / (self.length * self.length)
    }

    pub fn k_tilde_con(&self) -> f64 {
        self.k_con * self.tau / (self.length * self.length)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.c_ins > 0.0 && self.c_ins <= self.c_con) {
            errs.push(format!(
                "materials: need 0 < c_ins <= c_con, got c_ins={} c_con={}",
                self.c_ins, self.c_con
            ));
        }
        if !(self.k_ins > 0.0 && self.k_ins <= self.k_con) {
            errs.push(format!(
                "materials: need 0 < k_ins <= k_con, got k_ins={} k_con={}",
                self.k_ins, self.k_con
            ));
        }
        if !(self.p_c >= 1.0 && self.p_k >= 1.0) {
            errs.push(format!(
                "materials: SIMP exponents must be >= 1, got p_c={} p_k={}",
                self.p_c, self.p_k
            ));
        }
        if !(self.tau > 0.0 && self.length > 0.0) {
            errs.push("materials: tau and length must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Effective diffusivity `sqrt(k_con k_ins / (C_con C_ins))` on rescaled conductivities.
    pub fn effective_diffusivity(&self) -> f64 {
        ((self.k_tilde_con() * self.k_tilde_ins()) / (self.c_con * self.c_ins)).sqrt()
    }
}
