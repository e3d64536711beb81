//! Coarse-to-fine interpolation of finite element fields.

use super::basis::{eval_basis, n_local};
use super::constraints::ConstraintSet;
use super::dofs::DofMap;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Evaluates the coarse field at every fine node and re-applies the fine
/// constraints (hanging interpolation and Dirichlet data).
pub fn transfer_solution(
    coarse_mesh: &Mesh,
    coarse_dofs: &DofMap,
    coarse_values: &[f64],
    fine_mesh: &Mesh,
    fine_dofs: &DofMap,
    fine_constraints: &ConstraintSet,
) -> Result<Vec<f64>> {
    if !coarse_mesh.is_refined_by(fine_mesh) {
        return Err(Error::NotNested(
            "fine mesh does not descend from the coarse mesh".into(),
        ));
    }
    if coarse_dofs.layout() != fine_dofs.layout() {
        return Err(Error::NotNested("field layouts differ".into()));
    }
    let mut fine = vec![0.0; fine_dofs.n_dofs()];
    let mut done = vec![false; fine_dofs.n_dofs()];
    let mut local = [0.0; 9];
    for (pos, &cell) in fine_dofs.active_cells().iter().enumerate() {
        let ancestor = coarse_mesh.active_ancestor(fine_mesh, cell)?;
        let cpos = coarse_dofs.position(ancestor).ok_or_else(|| {
            Error::NotNested(format!("cell {ancestor} not active in coarse DOF map"))
        })?;
        let cbox = coarse_mesh.cell(ancestor).bbox;
        for &field in fine_dofs.fields() {
            let degree = field.degree();
            let nl = n_local(degree);
            coarse_dofs.gather(cpos, field, coarse_values, &mut local[..nl]);
            let off = fine_dofs.offset(field).expect("field");
            for &node in fine_dofs.cell_nodes(pos, degree) {
                let d = off + node as usize;
                if done[d] {
                    continue;
                }
                let r = cbox.to_reference(fine_dofs.node_point(degree, node as usize));
                let b = eval_basis(degree, r)?;
                fine[d] = b.values.iter().zip(&local[..nl]).map(|(n, c)| n * c).sum();
                done[d] = true;
            }
        }
    }
    fine_constraints.apply(&mut fine);
    Ok(fine)
}
