//! Residual a posteriori error indicators.
//!
//! Per cell `T`:
//! `theta_T^2 = h_T^2 (||p||^2 + ||q||^2) + sum_E h_E (||[p_hat]||^2 + ||[q_hat]||^2)`
//! over the interior edges of `T`, plus `||n.n - 1||^2_T` in the Lagrangian
//! formulation (where `p` carries `lambda n` and no penalty term).

use std::io::Write;
use std::path::Path;

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::mesh::cell_size;
use crate::physics::{
    div_displacement, dot, side_flux, strong_residuals, Formulation, MaterialParams,
};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalEstimate {
    pub cell: usize,
    pub volume_director: f64,
    pub volume_potential: f64,
    pub edges: f64,
    pub constraint: f64,
}

impl LocalEstimate {
    pub fn theta_sq(&self) -> f64 {
        self.volume_director + self.volume_potential + self.edges + self.constraint
    }

    pub fn theta(&self) -> f64 {
        self.theta_sq().sqrt()
    }
}

/// Indicators for every active cell, in ascending cell id order.
pub fn local_estimates(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
) -> Result<Vec<LocalEstimate>> {
    let cells = disc.dofs.active_cells();
    let rule = &disc.tables.rule;
    let mut out: Vec<LocalEstimate> = cells
        .iter()
        .map(|&cell| LocalEstimate {
            cell,
            ..Default::default()
        })
        .collect();

    for (pos, &cid) in cells.iter().enumerate() {
        let c = disc.mesh.cell(cid);
        let (area, h) = (c.bbox.area(), cell_size(c));
        let (mut pp, mut qq, mut mm) = (0.0, 0.0, 0.0);
        for (q, &w) in rule.weights.iter().enumerate() {
            let pt = disc.point_fields_full(pos, q, values);
            let r = strong_residuals(params, &pt)?;
            pp += w * dot(r.p, r.p);
            qq += w * r.q * r.q;
            let m = pt.unit_defect();
            mm += w * m * m;
        }
        let e = &mut out[pos];
        e.volume_director = h * h * area * pp;
        e.volume_potential = h * h * area * qq;
        if params.formulation == Formulation::Lagrangian {
            e.constraint = area * mm;
        }
    }

    for edge in disc.mesh.active_edges() {
        let Some((minus, plus)) = edge.sides() else {
            continue;
        };
        let (pm, pp) = (
            disc.dofs
                .position(minus)
                .ok_or(Error::InactiveCell(minus))?,
            disc.dofs.position(plus).ok_or(Error::InactiveCell(plus))?,
        );
        let (bm, bp) = (disc.mesh.cell(minus).bbox, disc.mesh.cell(plus).bbox);
        let mut s = 0.0;
        for (&t, &w) in rule.edge_points.iter().zip(&rule.edge_weights) {
            let x = edge.point_at(t);
            let fm = side_flux(
                params,
                &disc.point_fields_at(pm, bm.to_reference(x), values),
                edge.normal,
            );
            let fp = side_flux(
                params,
                &disc.point_fields_at(pp, bp.to_reference(x), values),
                edge.normal,
            );
            let jp = [
                fm.p_hat[0] - fp.p_hat[0],
                fm.p_hat[1] - fp.p_hat[1],
                fm.p_hat[2] - fp.p_hat[2],
            ];
            let jq = fm.q_hat - fp.q_hat;
            s += w * (dot(jp, jp) + jq * jq);
        }
        let contrib = edge.length * edge.length * s;
        out[pm].edges += contrib;
        out[pp].edges += contrib;
    }
    Ok(out)
}

pub fn global_estimate(locals: &[LocalEstimate]) -> f64 {
    locals
        .iter()
        .map(LocalEstimate::theta_sq)
        .sum::<f64>()
        .sqrt()
}

/// `sum_T int_T (div D)^2`.
pub fn gauss_conformance(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
) -> Result<f64> {
    if !params.electric || !disc.dofs.layout().electric {
        return Err(Error::ElectricDisabled);
    }
    let rule = &disc.tables.rule;
    let mut s = 0.0;
    for (pos, &cid) in disc.dofs.active_cells().iter().enumerate() {
        let area = disc.mesh.cell(cid).bbox.area();
        for (q, &w) in rule.weights.iter().enumerate() {
            let d = div_displacement(params, &disc.point_fields_full(pos, q, values))?;
            s += w * area * d * d;
        }
    }
    Ok(s)
}

/// `cell,x,y,level,volume_director,volume_potential,edges,constraint,theta`.
pub fn write_cells_csv(path: &Path, disc: &Discretization, locals: &[LocalEstimate]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "cell,x,y,level,volume_director,volume_potential,edges,constraint,theta"
    )?;
    for e in locals {
        let c = disc.mesh.cell(e.cell);
        let [x, y] = c.bbox.centroid();
        writeln!(
            w,
            "{},{:.10},{:.10},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            e.cell,
            x,
            y,
            c.level,
            e.volume_director,
            e.volume_potential,
            e.edges,
            e.constraint,
            e.theta()
        )?;
    }
    w.flush()?;
    Ok(())
}
