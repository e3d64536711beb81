//! Hanging-node and Dirichlet constraints.
//!
//! Every DOF is expressed as an affine function of the free (unconstrained)
//! DOFs: `u[d] = offset[d] + sum_k w[d,k] * free[idx[d,k]]`. Assembly uses the
//! same expansion to condense constrained rows and columns.

use std::collections::HashMap;

use super::basis::quadratic_trace_weights;
use super::dofs::{DofMap, Field, NodeKey};
use crate::error::{Error, Result};
use crate::mesh::{Adjacency, Mesh, Side};

/// Dirichlet data for the director and the electric potential.
pub trait BoundaryData: Send + Sync {
    fn director(&self, p: [f64; 2]) -> [f64; 3];

    fn potential(&self, _p: [f64; 2]) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Free,
    Dirichlet,
    Hanging,
}

/// A hanging DOF and its interpolation from master DOFs (which may be Dirichlet).
#[derive(Clone, Debug, PartialEq)]
pub struct HangingConstraint {
    pub dof: usize,
    pub masters: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct ConstraintSet {
    kinds: Vec<DofKind>,
    free_of: Vec<u32>,
    free_dofs: Vec<u32>,
    ptr: Vec<usize>,
    idx: Vec<u32>,
    weights: Vec<f64>,
    offset: Vec<f64>,
    hanging: Vec<HangingConstraint>,
}

const NOT_FREE: u32 = u32::MAX;

fn side_keys(mesh: &Mesh, finest: u32, cell: usize, side: Side) -> [NodeKey; 3] {
    let c = mesh.cell(cell);
    let s = 1u64 << (finest - c.level);
    let (i, j) = (c.index[0], c.index[1]);
    let k = |a: u64, b: u64| ((2 * j + b) * s, (2 * i + a) * s);
    match side {
        Side::Left => [k(0, 0), k(0, 1), k(0, 2)],
        Side::Right => [k(2, 0), k(2, 1), k(2, 2)],
        Side::Bottom => [k(0, 0), k(1, 0), k(2, 0)],
        Side::Top => [k(0, 2), k(1, 2), k(2, 2)],
    }
}

/// Node-level hanging constraints for one element degree, with chains
/// resolved so that masters are never hanging.
fn hanging_nodes(mesh: &Mesh, dofs: &DofMap, degree: usize) -> HashMap<usize, Vec<(usize, f64)>> {
    let finest = dofs.finest_level();
    let node = |k: NodeKey| dofs.find_node(degree, k).expect("master node exists");
    let mut raw: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for edge in mesh.active_edges() {
        let Adjacency::Hanging {
            coarse,
            fine,
            coarse_is_minus,
        } = edge.adjacency
        else {
            continue;
        };
        let vertical = edge.endpoints[0][0] == edge.endpoints[1][0];
        let coarse_side = match (vertical, coarse_is_minus) {
            (true, true) => Side::Right,
            (true, false) => Side::Left,
            (false, true) => Side::Top,
            (false, false) => Side::Bottom,
        };
        let [c0, cm, c1] = side_keys(mesh, finest, coarse, coarse_side);
        let [f0, fm, f1] = side_keys(mesh, finest, fine, coarse_side.opposite());
        let coord = |k: NodeKey| if vertical { k.0 } else { k.1 } as f64;
        if degree == 2 {
            let t = (coord(fm) - coord(c0)) / (coord(c1) - coord(c0));
            let w = quadratic_trace_weights(t);
            raw.insert(
                node(fm),
                vec![(node(c0), w[0]), (node(c1), w[1]), (node(cm), w[2])],
            );
        } else {
            let h = if f0 == c0 || f0 == c1 { f1 } else { f0 };
            debug_assert_eq!(h, cm);
            raw.insert(node(h), vec![(node(c0), 0.5), (node(c1), 0.5)]);
        }
    }

    fn resolve(
        n: usize,
        raw: &HashMap<usize, Vec<(usize, f64)>>,
        done: &mut HashMap<usize, Vec<(usize, f64)>>,
    ) -> Vec<(usize, f64)> {
        if let Some(r) = done.get(&n) {
            return r.clone();
        }
        let mut out: Vec<(usize, f64)> = Vec::new();
        for &(m, w) in &raw[&n] {
            if raw.contains_key(&m) {
                for (mm, ww) in resolve(m, raw, done) {
                    out.push((mm, w * ww));
                }
            } else {
                out.push((m, w));
            }
        }
        out.sort_by_key(|e| e.0);
        out.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        done.insert(n, out.clone());
        out
    }

    let mut done = HashMap::new();
    let mut keys: Vec<usize> = raw.keys().copied().collect();
    keys.sort_unstable();
    for n in keys {
        resolve(n, &raw, &mut done);
    }
    done
}

pub fn build_constraints(
    mesh: &Mesh,
    dofs: &DofMap,
    boundary: &dyn BoundaryData,
) -> Result<ConstraintSet> {
    if !mesh.is_one_irregular() {
        return Err(Error::NotOneIrregular);
    }
    let q2_hanging = hanging_nodes(mesh, dofs, 2);
    let q1_hanging = if dofs.layout().multiplier {
        hanging_nodes(mesh, dofs, 1)
    } else {
        HashMap::new()
    };

    let n = dofs.n_dofs();
    let mut kinds = vec![DofKind::Free; n];
    let mut pinned = vec![0.0; n];
    for &field in dofs.fields() {
        let off = dofs.offset(field).expect("field");
        let degree = field.degree();
        let hanging = if degree == 1 {
            &q1_hanging
        } else {
            &q2_hanging
        };
        for node in 0..dofs.n_field_nodes(field) {
            let key = dofs.node_key(degree, node);
            let d = off + node;
            if field.has_dirichlet() && dofs.key_on_boundary(key) {
                kinds[d] = DofKind::Dirichlet;
                let p = dofs.key_to_point(key);
                pinned[d] = match field.component() {
                    Some(c) => boundary.director(p)[c],
                    None => boundary.potential(p),
                };
            } else if hanging.contains_key(&node) {
                kinds[d] = DofKind::Hanging;
            }
        }
    }

    let mut free_of = vec![NOT_FREE; n];
    let mut free_dofs = Vec::new();
    for (d, k) in kinds.iter().enumerate() {
        if *k == DofKind::Free {
            free_of[d] = free_dofs.len() as u32;
            free_dofs.push(d as u32);
        }
    }

    let mut ptr = Vec::with_capacity(n + 1);
    let mut idx = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut offset = vec![0.0; n];
    let mut hanging_list = Vec::new();
    ptr.push(0);
    for d in 0..n {
        match kinds[d] {
            DofKind::Free => {
                idx.push(free_of[d]);
                weights.push(1.0);
            }
            DofKind::Dirichlet => offset[d] = pinned[d],
            DofKind::Hanging => {
                let (field, node) = dofs.dof_field(d);
                let off = d - node;
                let table = if field.degree() == 1 {
                    &q1_hanging
                } else {
                    &q2_hanging
                };
                let masters: Vec<(usize, f64)> =
                    table[&node].iter().map(|&(m, w)| (off + m, w)).collect();
                for &(m, w) in &masters {
                    match kinds[m] {
                        DofKind::Free => {
                            idx.push(free_of[m]);
                            weights.push(w);
                        }
                        DofKind::Dirichlet => offset[d] += w * pinned[m],
                        DofKind::Hanging => unreachable!("chains are resolved"),
                    }
                }
                hanging_list.push(HangingConstraint { dof: d, masters });
            }
        }
        ptr.push(idx.len());
    }

    Ok(ConstraintSet {
        kinds,
        free_of,
        free_dofs,
        ptr,
        idx,
        weights,
        offset,
        hanging: hanging_list,
    })
}

impl ConstraintSet {
    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    /// Condensed (unconstrained) DOF count.
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        self.kinds[dof]
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        match self.free_of[dof] {
            NOT_FREE => None,
            k => Some(k as usize),
        }
    }

    pub fn free_dof(&self, k: usize) -> usize {
        self.free_dofs[k] as usize
    }

    /// `(free indices, weights, offset)` of the affine expansion of `dof`.
    pub fn expansion(&self, dof: usize) -> (&[u32], &[f64], f64) {
        let r = self.ptr[dof]..self.ptr[dof + 1];
        (&self.idx[r.clone()], &self.weights[r], self.offset[dof])
    }

    pub fn hanging(&self) -> &[HangingConstraint] {
        &self.hanging
    }

    pub fn n_dirichlet(&self) -> usize {
        self.kinds
            .iter()
            .filter(|&&k| k == DofKind::Dirichlet)
            .count()
    }

    /// Full coefficient vector from free values.
    pub fn distribute(&self, free: &[f64], full: &mut [f64]) {
        for (d, slot) in full.iter_mut().enumerate() {
            let (idx, w, off) = self.expansion(d);
            *slot = off
                + idx
                    .iter()
                    .zip(w)
                    .map(|(&k, &w)| w * free[k as usize])
                    .sum::<f64>();
        }
    }

    pub fn extract(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d as usize]).collect()
    }

    /// Overwrites every constrained entry of `full` from its free entries.
    pub fn apply(&self, full: &mut [f64]) {
        let free = self.extract(full);
        self.distribute(&free, full);
    }

    /// Maximum violation of the constraint relations by `full`.
    pub fn violation(&self, full: &[f64]) -> f64 {
        let free = self.extract(full);
        let mut fixed = vec![0.0; full.len()];
        self.distribute(&free, &mut fixed);
        fixed
            .iter()
            .zip(full)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Field layout helper used in tests and by callers assembling per-field data.
pub fn field_of(dofs: &DofMap, dof: usize) -> Field {
    dofs.dof_field(dof).0
}
