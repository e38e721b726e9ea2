//! Design field pipeline: extrusion, PDE filter, tanh projection and SIMP
//! interpolation, plus the reverse chain rule for sensitivities.

pub mod filter;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use filter::{PdeFilter, FILTER_MAXIT};

use crate::assembly::Assembler;
use crate::error::{check_len, Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{MaterialSet, SpaceTimeMesh};

const RANGE_EPS: f64 = 1e-12;

/// Material coefficients of one element and their design derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub c: f64,
    pub k: f64,
    pub dc: f64,
    pub dk: f64,
}

/// Modified SIMP interpolation on the rescaled conductivities.
pub fn interpolate(gamma_bar: f64, m: &MaterialSet) -> Result<Interpolated> {
    if !(-RANGE_EPS..=1.0 + RANGE_EPS).contains(&gamma_bar) {
        return Err(Error::InvalidArgument(format!("density {gamma_bar} outside [0, 1]")));
    }
    let g = gamma_bar.clamp(0.0, 1.0);
    let (kins, kcon) = (m.k_tilde_ins(), m.k_tilde_con());
    Ok(Interpolated {
        c: m.c_ins + (m.c_con - m.c_ins) * g.powf(m.p_c),
        k: kins + (kcon - kins) * g.powf(m.p_k),
        dc: (m.c_con - m.c_ins) * m.p_c * g.powf(m.p_c - 1.0),
        dk: (kcon - kins) * m.p_k * g.powf(m.p_k - 1.0),
    })
}

/// Smoothed Heaviside `(tanh(b e) + tanh(b (x - e))) / (tanh(b e) + tanh(b (1 - e)))`
/// and its derivative.
#[inline]
pub fn project(x: f64, beta: f64, eta: f64) -> (f64, f64) {
    let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
    let th = (beta * (x - eta)).tanh();
    (((beta * eta).tanh() + th) / den, beta * (1.0 - th * th) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// One design variable per spatial element, copied to every time slab.
    #[default]
    TimeConstant,
    /// One design variable per space-time element.
    SpaceTime,
}

/// Copies a spatial field onto every time slab; the transpose sums through time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extrusion {
    per_slab: usize,
    slabs: usize,
}

impl Extrusion {
    pub fn new(mesh: &SpaceTimeMesh) -> Self {
        Self {
            per_slab: mesh.elements_per_slab(),
            slabs: mesh.nt(),
        }
    }

    pub fn extrude(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        check_len("extrusion input", self.per_slab, reduced.len())?;
        Ok(reduced.repeat(self.slabs))
    }

    pub fn reduce(&self, full: &[f64]) -> Result<Vec<f64>> {
        check_len("extrusion transpose input", self.per_slab * self.slabs, full.len())?;
        let mut out = vec![0.0; self.per_slab];
        for slab in full.chunks(self.per_slab) {
            for (o, v) in out.iter_mut().zip(slab) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// The map as an explicit `N_e x (n_x1 n_x2)` matrix.
    pub fn matrix(&self) -> SparseMatrix {
        let n = self.per_slab * self.slabs;
        let row_ptr = (0..=n).collect();
        let cols = (0..n).map(|e| (e % self.per_slab) as u32).collect();
        SparseMatrix::from_csr(n, self.per_slab, row_ptr, cols, vec![1.0; n])
            .expect("extrusion pattern is valid by construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Spatial radius in rescaled length; `None` means 2.4 element widths.
    pub rx: Option<f64>,
    /// Temporal radius in physical time units; `None` means 2.4 element durations.
    pub rt_physical: Option<f64>,
    pub beta: f64,
    pub eta: f64,
    pub rtol: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            rx: None,
            rt_physical: None,
            beta: 32.0,
            eta: 0.5,
            rtol: 1e-8,
        }
    }
}

impl FilterConfig {
    /// `(rx, rt)` on the rescaled mesh.
    pub fn radii(&self, mesh: &SpaceTimeMesh) -> (f64, f64) {
        let rx = self.rx.unwrap_or(2.4 * mesh.dx());
        let rt = self.rt_physical.map_or(2.4 * mesh.dt(), |r| r / mesh.tau());
        (rx, rt)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.rx.is_some_and(|r| !(r > 0.0)) || self.rt_physical.is_some_and(|r| !(r > 0.0)) {
            errs.push("filter: radii must be positive".to_string());
        }
        if !(self.beta > 0.0) {
            errs.push(format!("filter.beta must be positive, got {}", self.beta));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            errs.push(format!("filter.eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            errs.push(format!("filter.rtol must lie in (0, 1), got {}", self.rtol));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Raw, filtered and projected fields for one design, plus the cached projection slope.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub mode: DesignMode,
    /// Design variables: per spatial element or per space-time element.
    pub gamma: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    dproject: Vec<f64>,
    beta: f64,
    eta: f64,
}

impl DesignState {
    /// Raw design on every space-time element.
    pub fn gamma_full(&self, ext: &Extrusion) -> Result<Vec<f64>> {
        match self.mode {
            DesignMode::TimeConstant => ext.extrude(&self.gamma),
            DesignMode::SpaceTime => Ok(self.gamma.clone()),
        }
    }

    pub fn projection_slope(&self) -> &[f64] {
        &self.dproject
    }
}

/// `gamma -> extrude -> filter -> project`.
#[derive(Debug, Clone)]
pub struct DesignPipeline {
    mesh: SpaceTimeMesh,
    mode: DesignMode,
    filter: PdeFilter,
    extrusion: Extrusion,
    beta: f64,
    eta: f64,
}

impl DesignPipeline {
    pub fn new(assembler: &Assembler, mode: DesignMode, config: &FilterConfig) -> Result<Self> {
        config.validate()?;
        let mesh = *assembler.mesh();
        let (rx, rt) = config.radii(&mesh);
        Ok(Self {
            mesh,
            mode,
            filter: PdeFilter::new(assembler, rx, rt, config.rtol)?,
            extrusion: Extrusion::new(&mesh),
            beta: config.beta,
            eta: config.eta,
        })
    }

    pub fn mode(&self) -> DesignMode {
        self.mode
    }
    pub fn filter(&self) -> &PdeFilter {
        &self.filter
    }
    pub fn filter_mut(&mut self) -> &mut PdeFilter {
        &mut self.filter
    }
    pub fn extrusion(&self) -> &Extrusion {
        &self.extrusion
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_design_variables(&self) -> usize {
        match self.mode {
            DesignMode::TimeConstant => self.mesh.elements_per_slab(),
            DesignMode::SpaceTime => self.mesh.num_elements(),
        }
    }

    pub fn forward(&self, gamma: &[f64]) -> Result<DesignState> {
        check_len("design variables", self.num_design_variables(), gamma.len())?;
        if let Some(g) = gamma.iter().find(|g| !(-RANGE_EPS..=1.0 + RANGE_EPS).contains(*g)) {
            return Err(Error::InvalidArgument(format!("design value {g} outside [0, 1]")));
        }
        let full = match self.mode {
            DesignMode::TimeConstant => self.extrusion.extrude(gamma)?,
            DesignMode::SpaceTime => gamma.to_vec(),
        };
        let gamma_tilde = self.filter.apply(&full)?;
        let (gamma_bar, dproject): (Vec<f64>, Vec<f64>) =
            gamma_tilde.par_iter().map(|&x| project(x, self.beta, self.eta)).unzip();
        Ok(DesignState {
            mode: self.mode,
            gamma: gamma.to_vec(),
            gamma_tilde,
            gamma_bar,
            dproject,
            beta: self.beta,
            eta: self.eta,
        })
    }

    /// Pulls `d phi / d gamma_bar` (per space-time element) back to the design variables.
    pub fn backward(&self, state: &DesignState, dphi_dgamma_bar: &[f64]) -> Result<Vec<f64>> {
        if state.mode != self.mode
            || state.beta != self.beta
            || state.eta != self.eta
            || state.dproject.len() != self.mesh.num_elements()
        {
            return Err(Error::Stale("design state was produced by a different pipeline"));
        }
        check_len("element sensitivities", self.mesh.num_elements(), dphi_dgamma_bar.len())?;
        let scaled: Vec<f64> = dphi_dgamma_bar
            .par_iter()
            .zip(&state.dproject)
            .map(|(d, s)| d * s)
            .collect();
        let through_filter = self.filter.apply_transpose(&scaled)?;
        match self.mode {
            DesignMode::TimeConstant => self.extrusion.reduce(&through_filter),
            DesignMode::SpaceTime => Ok(through_filter),
        }
    }

    /// Pulls a sensitivity with respect to the raw space-time field back to the design variables.
    pub fn reduce_raw(&self, d_full: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            DesignMode::TimeConstant => self.extrusion.reduce(d_full),
            DesignMode::SpaceTime => {
                check_len("raw sensitivities", self.mesh.num_elements(), d_full.len())?;
                Ok(d_full.to_vec())
            }
        }
    }
}
