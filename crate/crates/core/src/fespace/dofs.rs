//! Global node numbering and field layout.
//!
//! Nodes are identified by integer keys on a lattice fine enough to hold the
//! Q2 nodes of the finest active level, then numbered lexicographically by
//! `(y, x)`. Q1 nodes are the cell vertices, numbered the same way.

use std::collections::HashMap;

use crate::mesh::{BBox, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    N1,
    N2,
    N3,
    Potential,
    Multiplier,
}

impl Field {
    pub fn degree(self) -> usize {
        match self {
            Field::Multiplier => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::N1 => "n1",
            Field::N2 => "n2",
            Field::N3 => "n3",
            Field::Potential => "phi",
            Field::Multiplier => "lambda",
        }
    }

    /// Director component index, if any.
    pub fn component(self) -> Option<usize> {
        match self {
            Field::N1 => Some(0),
            Field::N2 => Some(1),
            Field::N3 => Some(2),
            _ => None,
        }
    }

    pub fn has_dirichlet(self) -> bool {
        !matches!(self, Field::Multiplier)
    }
}

/// Which fields are discretized. The director is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    pub electric: bool,
    pub multiplier: bool,
}

impl FieldLayout {
    pub fn fields(&self) -> Vec<Field> {
        let mut f = vec![Field::N1, Field::N2, Field::N3];
        if self.electric {
            f.push(Field::Potential);
        }
        if self.multiplier {
            f.push(Field::Multiplier);
        }
        f
    }
}

pub(crate) type NodeKey = (u64, u64);

#[derive(Clone, Debug)]
pub struct DofMap {
    layout: FieldLayout,
    fields: Vec<Field>,
    domain: BBox,
    /// Active cell ids, ascending.
    cells: Vec<usize>,
    cell_pos: HashMap<usize, usize>,
    /// Lattice units per unit length along x and y are `scale / width`, `scale / height`.
    scale: [u64; 2],
    finest: u32,
    q2_keys: Vec<NodeKey>,
    q1_keys: Vec<NodeKey>,
    cell_q2: Vec<[u32; 9]>,
    cell_q1: Vec<[u32; 4]>,
    offsets: Vec<usize>,
    n_dofs: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh, layout: FieldLayout) -> DofMap {
        let finest = mesh.max_level();
        let (nx, ny) = mesh.coarse_grid();
        let scale = [2 * ((nx as u64) << finest), 2 * ((ny as u64) << finest)];
        let cells = mesh.active_cells();
        let cell_pos = cells.iter().enumerate().map(|(p, &c)| (c, p)).collect();

        let key = |id: usize, a: u64, b: u64| -> NodeKey {
            let c = mesh.cell(id);
            let s = 1u64 << (finest - c.level);
            ((2 * c.index[1] + b) * s, (2 * c.index[0] + a) * s)
        };

        let mut q2_keys = Vec::with_capacity(cells.len() * 9);
        for &id in &cells {
            for b in 0..3 {
                for a in 0..3 {
                    q2_keys.push(key(id, a, b));
                }
            }
        }
        q2_keys.sort_unstable();
        q2_keys.dedup();

        let mut q1_keys = Vec::new();
        if layout.multiplier {
            q1_keys.reserve(cells.len() * 4);
            for &id in &cells {
                for b in [0, 2] {
                    for a in [0, 2] {
                        q1_keys.push(key(id, a, b));
                    }
                }
            }
            q1_keys.sort_unstable();
            q1_keys.dedup();
        }

        let find = |keys: &[NodeKey], k: NodeKey| keys.binary_search(&k).expect("node key") as u32;
        let cell_q2 = cells
            .iter()
            .map(|&id| {
                let mut local = [0u32; 9];
                for (l, slot) in local.iter_mut().enumerate() {
                    *slot = find(&q2_keys, key(id, (l % 3) as u64, (l / 3) as u64));
                }
                local
            })
            .collect();
        let cell_q1 = if layout.multiplier {
            cells
                .iter()
                .map(|&id| {
                    let mut local = [0u32; 4];
                    for (l, slot) in local.iter_mut().enumerate() {
                        *slot = find(&q1_keys, key(id, 2 * (l % 2) as u64, 2 * (l / 2) as u64));
                    }
                    local
                })
                .collect()
        } else {
            Vec::new()
        };

        let fields = layout.fields();
        let mut offsets = Vec::with_capacity(fields.len());
        let mut n_dofs = 0;
        for f in &fields {
            offsets.push(n_dofs);
            n_dofs += match f.degree() {
                1 => q1_keys.len(),
                _ => q2_keys.len(),
            };
        }

        DofMap {
            layout,
            fields,
            domain: mesh.domain(),
            cells,
            cell_pos,
            scale,
            finest,
            q2_keys,
            q1_keys,
            cell_q2,
            cell_q1,
            offsets,
            n_dofs,
        }
    }

    pub fn layout(&self) -> FieldLayout {
        self.layout
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    /// Raw nodal DOF count over all fields.
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_q2_nodes(&self) -> usize {
        self.q2_keys.len()
    }

    pub fn n_q1_nodes(&self) -> usize {
        self.q1_keys.len()
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn position(&self, cell: usize) -> Option<usize> {
        self.cell_pos.get(&cell).copied()
    }

    pub fn field_index(&self, field: Field) -> Option<usize> {
        self.fields.iter().position(|&f| f == field)
    }

    pub fn offset(&self, field: Field) -> Option<usize> {
        self.field_index(field).map(|i| self.offsets[i])
    }

    pub fn n_field_nodes(&self, field: Field) -> usize {
        match field.degree() {
            1 => self.q1_keys.len(),
            _ => self.q2_keys.len(),
        }
    }

    /// Global node indices (per degree) of the cell at `pos`.
    pub fn cell_nodes(&self, pos: usize, degree: usize) -> &[u32] {
        match degree {
            1 => &self.cell_q1[pos],
            _ => &self.cell_q2[pos],
        }
    }

    /// Global DOF indices of `field` on the cell at `pos`, in local basis order.
    pub fn cell_dofs(&self, pos: usize, field: Field) -> impl Iterator<Item = usize> + '_ {
        let off = self.offset(field).expect("field in layout");
        self.cell_nodes(pos, field.degree())
            .iter()
            .map(move |&n| off + n as usize)
    }

    pub(crate) fn node_key(&self, degree: usize, node: usize) -> NodeKey {
        match degree {
            1 => self.q1_keys[node],
            _ => self.q2_keys[node],
        }
    }

    pub(crate) fn find_node(&self, degree: usize, key: NodeKey) -> Option<usize> {
        let keys = if degree == 1 {
            &self.q1_keys
        } else {
            &self.q2_keys
        };
        keys.binary_search(&key).ok()
    }

    pub(crate) fn finest_level(&self) -> u32 {
        self.finest
    }

    pub(crate) fn key_to_point(&self, key: NodeKey) -> [f64; 2] {
        let (y, x) = key;
        [
            self.domain.x0 + self.domain.width() * x as f64 / self.scale[0] as f64,
            self.domain.y0 + self.domain.height() * y as f64 / self.scale[1] as f64,
        ]
    }

    pub fn node_point(&self, degree: usize, node: usize) -> [f64; 2] {
        self.key_to_point(self.node_key(degree, node))
    }

    pub(crate) fn key_on_boundary(&self, key: NodeKey) -> bool {
        let (y, x) = key;
        x == 0 || y == 0 || x == self.scale[0] || y == self.scale[1]
    }

    /// Field and node of a global DOF.
    pub fn dof_field(&self, dof: usize) -> (Field, usize) {
        let i = self.offsets.partition_point(|&o| o <= dof) - 1;
        (self.fields[i], dof - self.offsets[i])
    }

    /// Gathers the local coefficients of `field` on the cell at `pos`.
    pub fn gather(&self, pos: usize, field: Field, values: &[f64], out: &mut [f64]) {
        for (slot, d) in out.iter_mut().zip(self.cell_dofs(pos, field)) {
            *slot = values[d];
        }
    }
}
