//! Legacy ASCII VTK export and the per-iteration metrics CSV.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::SpaceTimeMesh;
use crate::optimizer::OptRecord;

/// First line of every metrics file; bump when columns change.
pub const METRICS_VERSION_LINE: &str = "# sttopo-metrics v1";
pub const METRICS_HEADER: &str = "iter,phi,chi,state_iters,adjoint_iters,wall_seconds";

/// Named field for export. Cell fields have one value per element, point fields one per node.
#[derive(Debug, Clone, Copy)]
pub struct Field<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

impl<'a> Field<'a> {
    pub fn new(name: &'a str, values: &'a [f64]) -> Self {
        Self { name, values }
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("VTK field name {name:?} must be non-empty without spaces")));
    }
    Ok(())
}

fn push_block(out: &mut String, f: &Field) {
    let _ = writeln!(out, "SCALARS {} double 1", f.name);
    out.push_str("LOOKUP_TABLE default\n");
    for v in f.values {
        // 17 significant digits round-trip every finite double.
        let _ = writeln!(out, "{v:.16e}");
    }
}

/// Structured-points file contents with time as the third axis.
pub fn vtk_string(mesh: &SpaceTimeMesh, cells: &[Field], points: &[Field]) -> Result<String> {
    for f in cells {
        check_name(f.name)?;
        if f.values.len() != mesh.num_elements() {
            return Err(Error::Dimension {
                context: "VTK cell field",
                expected: mesh.num_elements(),
                actual: f.values.len(),
            });
        }
    }
    for f in points {
        check_name(f.name)?;
        if f.values.len() != mesh.num_nodes() {
            return Err(Error::Dimension {
                context: "VTK point field",
                expected: mesh.num_nodes(),
                actual: f.values.len(),
            });
        }
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "sttopo space-time field tau={:.16e}", mesh.tau());
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let (nx, ny, nt) = mesh.dims();
    let _ = writeln!(out, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nt + 1);
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {:.16e} {:.16e} {:.16e}", mesh.dx(), mesh.dx(), mesh.dt());
    if !cells.is_empty() {
        let _ = writeln!(out, "CELL_DATA {}", mesh.num_elements());
        cells.iter().for_each(|f| push_block(&mut out, f));
    }
    if !points.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
        points.iter().for_each(|f| push_block(&mut out, f));
    }
    Ok(out)
}

pub fn write_vtk(path: &Path, mesh: &SpaceTimeMesh, cells: &[Field], points: &[Field]) -> Result<()> {
    let s = vtk_string(mesh, cells, points)?;
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// 0/1 field marking elements whose value exceeds `threshold`.
pub fn thresholded(values: &[f64], threshold: f64) -> Vec<f64> {
    values.iter().map(|&v| if v > threshold { 1.0 } else { 0.0 }).collect()
}

/// Streams metrics rows, flushing after each one so a crash leaves a valid prefix.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: String,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let p = path.display().to_string();
        let io_err = |e| Error::Io {
            path: p.clone(),
            source: e,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        writeln!(out, "{METRICS_VERSION_LINE}").map_err(io_err)?;
        writeln!(out, "{METRICS_HEADER}").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        Ok(Self { out, path: p })
    }

    pub fn write(&mut self, r: &OptRecord) -> Result<()> {
        let line = format!(
            "{},{:.16e},{:.16e},{},{},{:.6}",
            r.iter,
            r.phi,
            r.chi,
            r.state.outer_iterations,
            r.adjoint.as_ref().map_or(0, |s| s.outer_iterations),
            r.wall_seconds
        );
        let path = &self.path;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })
    }
}

pub fn write_metrics(records: &[OptRecord], path: &Path) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}
