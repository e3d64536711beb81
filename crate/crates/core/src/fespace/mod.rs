//! Lagrange finite element spaces on quadtree meshes.

pub mod basis;
pub mod constraints;
pub mod dofs;
pub mod quadrature;
pub mod transfer;

pub use basis::{eval_basis, n_local, quadratic_trace_weights, reference_nodes, BasisEval};
pub use constraints::{build_constraints, BoundaryData, ConstraintSet, DofKind, HangingConstraint};
pub use dofs::{DofMap, Field, FieldLayout};
pub use quadrature::{gauss_legendre, quadrature_rule, QuadratureRule};
pub use transfer::transfer_solution;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Value and physical derivatives of one scalar field at a point.
/// Second derivatives are `[xx, xy, yy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

/// Evaluates `field` at physical point `p` inside active `cell`.
pub fn eval_field(
    mesh: &Mesh,
    dofs: &DofMap,
    values: &[f64],
    field: Field,
    cell: usize,
    p: [f64; 2],
) -> Result<FieldValue> {
    let pos = dofs.position(cell).ok_or(Error::InactiveCell(cell))?;
    let bbox = mesh.cell(cell).bbox;
    let degree = field.degree();
    let b = eval_basis(degree, bbox.to_reference(p))?;
    let (hx, hy) = (bbox.width(), bbox.height());
    let mut out = FieldValue::default();
    for (l, d) in dofs.cell_dofs(pos, field).enumerate() {
        let c = values[d];
        out.value += c * b.values[l];
        out.grad[0] += c * b.grads[l][0] / hx;
        out.grad[1] += c * b.grads[l][1] / hy;
        out.hess[0] += c * b.hessians[l][0] / (hx * hx);
        out.hess[1] += c * b.hessians[l][1] / (hx * hy);
        out.hess[2] += c * b.hessians[l][2] / (hy * hy);
    }
    Ok(out)
}

/// Active cell containing `p` (the lowest id on ties), if any.
pub fn locate(mesh: &Mesh, p: [f64; 2]) -> Option<usize> {
    mesh.active_cells()
        .into_iter()
        .find(|&c| mesh.cell(c).bbox.contains(p, 1e-12))
}

/// Interpolates scalar functions, one per field, at every node.
pub fn interpolate(dofs: &DofMap, f: impl Fn(Field, [f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; dofs.n_dofs()];
    for &field in dofs.fields() {
        let off = dofs.offset(field).expect("field");
        for node in 0..dofs.n_field_nodes(field) {
            out[off + node] = f(field, dofs.node_point(field.degree(), node));
        }
    }
    out
}
