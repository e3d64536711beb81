//! Legacy ASCII VTK output of a solution, one `VTK_QUAD` per active cell.
//!
//! Every cell carries its own four corner points, so hanging nodes need no
//! special treatment; values at shared corners coincide up to rounding.

use std::io::Write;
use std::path::Path;

use crate::assembly::Discretization;
use crate::error::Result;
use crate::estimator::LocalEstimate;

const CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Point data: `n`, `phi`, `lambda`, `unit_deviation = |n| - 1`.
/// Cell data: `theta` and, when given, `h1_error` (from squared per-cell errors).
pub fn write_vtk(
    path: &Path,
    disc: &Discretization,
    values: &[f64],
    estimates: &[LocalEstimate],
    h1_cells: Option<&[f64]>,
) -> Result<()> {
    let cells = disc.dofs.active_cells();
    let mut pts = Vec::with_capacity(4 * cells.len());
    for (pos, &cid) in cells.iter().enumerate() {
        let bbox = disc.mesh.cell(cid).bbox;
        for r in CORNERS {
            pts.push((bbox.to_physical(r), disc.point_fields_at(pos, r, values)));
        }
    }

    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "lcfem solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", pts.len())?;
    for (x, _) in &pts {
        writeln!(w, "{:.12e} {:.12e} 0", x[0], x[1])?;
    }
    writeln!(w, "CELLS {} {}", cells.len(), 5 * cells.len())?;
    for k in 0..cells.len() {
        let b = 4 * k;
        writeln!(w, "4 {} {} {} {}", b, b + 1, b + 2, b + 3)?;
    }
    writeln!(w, "CELL_TYPES {}", cells.len())?;
    for _ in 0..cells.len() {
        writeln!(w, "9")?;
    }

    writeln!(w, "POINT_DATA {}", pts.len())?;
    writeln!(w, "VECTORS n double")?;
    for (_, p) in &pts {
        writeln!(w, "{:.12e} {:.12e} {:.12e}", p.n[0], p.n[1], p.n[2])?;
    }
    let scalars: [(&str, fn(&crate::physics::PointFields) -> f64); 3] = [
        ("phi", |p| p.phi),
        ("lambda", |p| p.lambda),
        ("unit_deviation", |p| {
            (p.n[0] * p.n[0] + p.n[1] * p.n[1] + p.n[2] * p.n[2]).sqrt() - 1.0
        }),
    ];
    for (name, f) in scalars {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for (_, p) in &pts {
            writeln!(w, "{:.12e}", f(p))?;
        }
    }

    writeln!(w, "CELL_DATA {}", cells.len())?;
    writeln!(w, "SCALARS theta double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for e in estimates {
        writeln!(w, "{:.12e}", e.theta())?;
    }
    if let Some(h1) = h1_cells {
        writeln!(w, "SCALARS h1_error double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for e in h1 {
            writeln!(w, "{:.12e}", e.sqrt())?;
        }
    }
    w.flush()?;
    Ok(())
}
