//! Hierarchical quadrilateral mesh over an axis-aligned rectangle.
//!
//! Level-0 cells form an `nx x ny` grid. Refining a cell splits it into four
//! congruent children; refinement closure keeps the mesh 1-irregular, so an
//! edge carries at most one hanging node. Cells are never removed, which keeps
//! cell ids stable across refinement: a cell id of a coarse mesh names the same
//! rectangle in every mesh derived from it.
//!
//! Child ordering within a parent is `[sw, se, nw, ne]`, i.e. child `a + 2b`
//! covers the `a`-th half in x and `b`-th half in y.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub const UNIT: BBox = BBox {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Diagonal length, i.e. the cell diameter `h_T`.
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn centroid(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    /// Maps a reference point in `[0,1]^2` to physical coordinates.
    pub fn to_physical(&self, r: [f64; 2]) -> [f64; 2] {
        [
            self.x0 + r[0] * self.width(),
            self.y0 + r[1] * self.height(),
        ]
    }

    /// Inverse of [`BBox::to_physical`].
    pub fn to_reference(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.x0) / self.width(),
            (p[1] - self.y0) / self.height(),
        ]
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol
            && p[0] <= self.x1 + tol
            && p[1] >= self.y0 - tol
            && p[1] <= self.y1 + tol
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: usize,
    pub level: u32,
    /// Integer position `(i, j)` in the level grid of `(nx << level) x (ny << level)` cells.
    pub index: [u64; 2],
    pub bbox: BBox,
    pub parent: Option<usize>,
    pub children: Option<[usize; 4]>,
    pub active: bool,
}

impl Cell {
    /// Cell diameter `h_T`.
    pub fn size(&self) -> f64 {
        cell_size(self)
    }
}

/// Diameter of a cell (length of the bbox diagonal).
pub fn cell_size(cell: &Cell) -> f64 {
    cell.bbox.diameter()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    /// Children of a refined cell that touch this side.
    fn children(self) -> [usize; 2] {
        match self {
            Side::Left => [0, 2],
            Side::Right => [1, 3],
            Side::Bottom => [0, 1],
            Side::Top => [2, 3],
        }
    }

    /// `true` when the cell on this side of an edge is the `minus` side of the
    /// fixed interior orientation (`eta = +x` for vertical, `+y` for horizontal edges).
    fn neighbor_is_minus(self) -> bool {
        matches!(self, Side::Left | Side::Bottom)
    }
}

fn side_segment(b: &BBox, side: Side) -> [[f64; 2]; 2] {
    match side {
        Side::Left => [[b.x0, b.y0], [b.x0, b.y1]],
        Side::Right => [[b.x1, b.y0], [b.x1, b.y1]],
        Side::Bottom => [[b.x0, b.y0], [b.x1, b.y0]],
        Side::Top => [[b.x0, b.y1], [b.x1, b.y1]],
    }
}

/// What lies across one side of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    /// Cell at the same level (may be refined).
    Same(usize),
    /// Active cell `levels` levels coarser.
    Coarser {
        cell: usize,
        levels: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjacency {
    Boundary {
        cell: usize,
    },
    Conforming {
        minus: usize,
        plus: usize,
    },
    /// A fine sub-edge of a coarse cell side.
    Hanging {
        coarse: usize,
        fine: usize,
        coarse_is_minus: bool,
    },
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub id: usize,
    pub endpoints: [[f64; 2]; 2],
    /// Unit normal `eta_E`: outward on the boundary, `+x`/`+y` in the interior.
    pub normal: [f64; 2],
    pub adjacency: Adjacency,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        matches!(self.adjacency, Adjacency::Boundary { .. })
    }

    /// `(minus, plus)` cells of an interior edge; `eta_E` points from minus to plus.
    pub fn sides(&self) -> Option<(usize, usize)> {
        match self.adjacency {
            Adjacency::Boundary { .. } => None,
            Adjacency::Conforming { minus, plus } => Some((minus, plus)),
            Adjacency::Hanging {
                coarse,
                fine,
                coarse_is_minus,
            } => Some(if coarse_is_minus {
                (coarse, fine)
            } else {
                (fine, coarse)
            }),
        }
    }

    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let [a, b] = self.endpoints;
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    cells: Vec<Cell>,
    domain: BBox,
    nx: usize,
    ny: usize,
    lookup: HashMap<(u32, u64, u64), usize>,
    edges: Vec<Edge>,
    one_irregular: bool,
}

impl Mesh {
    /// `nx x ny` grid of level-0 cells tiling `domain`.
    pub fn uniform(nx: usize, ny: usize, domain: BBox) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidSubdivision { nx, ny });
        }
        let hx = domain.width() / nx as f64;
        let hy = domain.height() / ny as f64;
        let mut cells = Vec::with_capacity(nx * ny);
        let mut lookup = HashMap::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let id = cells.len();
                let bbox = BBox::new(
                    domain.x0 + i as f64 * hx,
                    domain.y0 + j as f64 * hy,
                    if i + 1 == nx {
                        domain.x1
                    } else {
                        domain.x0 + (i + 1) as f64 * hx
                    },
                    if j + 1 == ny {
                        domain.y1
                    } else {
                        domain.y0 + (j + 1) as f64 * hy
                    },
                );
                cells.push(Cell {
                    id,
                    level: 0,
                    index: [i as u64, j as u64],
                    bbox,
                    parent: None,
                    children: None,
                    active: true,
                });
                lookup.insert((0, i as u64, j as u64), id);
            }
        }
        let mut mesh = Mesh {
            cells,
            domain,
            nx,
            ny,
            lookup,
            edges: Vec::new(),
            one_irregular: true,
        };
        mesh.rebuild_edges();
        Ok(mesh)
    }

    pub fn domain(&self) -> BBox {
        self.domain
    }

    pub fn coarse_grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// All cells ever created, active or not, indexed by id.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.cells.get(id).is_some_and(|c| c.active)
    }

    /// Active cell ids in ascending order.
    pub fn active_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.active)
            .map(|c| c.id)
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.cells.iter().filter(|c| c.active).count()
    }

    pub fn max_level(&self) -> u32 {
        self.cells
            .iter()
            .filter(|c| c.active)
            .map(|c| c.level)
            .max()
            .unwrap_or(0)
    }

    pub fn is_one_irregular(&self) -> bool {
        self.one_irregular
    }

    /// Every active-cell boundary segment exactly once; hanging interfaces
    /// are reported per fine sub-edge.
    pub fn active_edges(&self) -> &[Edge] {
        &self.edges
    }

    fn level_extent(&self, level: u32) -> (u64, u64) {
        ((self.nx as u64) << level, (self.ny as u64) << level)
    }

    pub fn neighbor(&self, id: usize, side: Side) -> Neighbor {
        let cell = &self.cells[id];
        let (ex, ey) = self.level_extent(cell.level);
        let [i, j] = cell.index;
        let (ni, nj) = match side {
            Side::Left if i == 0 => return Neighbor::Boundary,
            Side::Left => (i - 1, j),
            Side::Right if i + 1 == ex => return Neighbor::Boundary,
            Side::Right => (i + 1, j),
            Side::Bottom if j == 0 => return Neighbor::Boundary,
            Side::Bottom => (i, j - 1),
            Side::Top if j + 1 == ey => return Neighbor::Boundary,
            Side::Top => (i, j + 1),
        };
        if let Some(&k) = self.lookup.get(&(cell.level, ni, nj)) {
            return Neighbor::Same(k);
        }
        let mut level = cell.level;
        let (mut ci, mut cj) = (ni, nj);
        while level > 0 {
            level -= 1;
            ci >>= 1;
            cj >>= 1;
            if let Some(&k) = self.lookup.get(&(level, ci, cj)) {
                return Neighbor::Coarser {
                    cell: k,
                    levels: cell.level - level,
                };
            }
        }
        unreachable!("level-0 grid is complete")
    }

    /// Returns a refined copy: every marked cell is split and further cells are
    /// split until the mesh is 1-irregular again. `self` is left untouched.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        let mut ids: Vec<usize> = marked.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if let Some(&bad) = ids.iter().find(|&&id| !self.is_active(id)) {
            return Err(Error::InactiveCell(bad));
        }
        let mut mesh = self.clone();
        for id in ids {
            mesh.split(id);
        }
        mesh.close();
        mesh.rebuild_edges();
        Ok(mesh)
    }

    /// Refines every active cell once.
    pub fn refine_uniform(&self) -> Mesh {
        let all = self.active_cells();
        self.refine(&all).expect("active ids")
    }

    fn split(&mut self, id: usize) {
        let parent = self.cells[id].clone();
        debug_assert!(parent.active);
        let level = parent.level + 1;
        let b = parent.bbox;
        let xm = 0.5 * (b.x0 + b.x1);
        let ym = 0.5 * (b.y0 + b.y1);
        let base = self.cells.len();
        let mut children = [0; 4];
        for (k, child) in children.iter_mut().enumerate() {
            let (a, c) = (k % 2, k / 2);
            let bbox = BBox::new(
                if a == 0 { b.x0 } else { xm },
                if c == 0 { b.y0 } else { ym },
                if a == 0 { xm } else { b.x1 },
                if c == 0 { ym } else { b.y1 },
            );
            let index = [
                2 * parent.index[0] + a as u64,
                2 * parent.index[1] + c as u64,
            ];
            let cid = base + k;
            self.cells.push(Cell {
                id: cid,
                level,
                index,
                bbox,
                parent: Some(id),
                children: None,
                active: true,
            });
            self.lookup.insert((level, index[0], index[1]), cid);
            *child = cid;
        }
        let p = &mut self.cells[id];
        p.children = Some(children);
        p.active = false;
    }

    /// A cell needs closure refinement when a neighbor across one of its sides
    /// is two or more levels finer.
    fn needs_closure(&self, id: usize) -> bool {
        Side::ALL.iter().any(|&side| match self.neighbor(id, side) {
            Neighbor::Same(k) => match self.cells[k].children {
                Some(ch) => side
                    .opposite()
                    .children()
                    .iter()
                    .any(|&c| self.cells[ch[c]].children.is_some()),
                None => false,
            },
            _ => false,
        })
    }

    fn close(&mut self) {
        loop {
            let pending: Vec<usize> = self
                .active_cells()
                .into_iter()
                .filter(|&id| self.needs_closure(id))
                .collect();
            if pending.is_empty() {
                break;
            }
            for id in pending {
                self.split(id);
            }
        }
    }

    fn rebuild_edges(&mut self) {
        let mut edges = Vec::new();
        let mut irregular = false;
        for id in self.active_cells() {
            let cell = &self.cells[id];
            for side in Side::ALL {
                let seg = side_segment(&cell.bbox, side);
                let length =
                    ((seg[1][0] - seg[0][0]).powi(2) + (seg[1][1] - seg[0][1]).powi(2)).sqrt();
                let interior_normal = match side {
                    Side::Left | Side::Right => [1.0, 0.0],
                    Side::Bottom | Side::Top => [0.0, 1.0],
                };
                let adjacency = match self.neighbor(id, side) {
                    Neighbor::Boundary => {
                        Some((Adjacency::Boundary { cell: id }, side.outward_normal()))
                    }
                    Neighbor::Same(k) if self.cells[k].active => match side {
                        Side::Right | Side::Top => Some((
                            Adjacency::Conforming { minus: id, plus: k },
                            interior_normal,
                        )),
                        _ => None,
                    },
                    Neighbor::Same(k) => {
                        let ch = self.cells[k].children.expect("refined neighbor");
                        if side
                            .opposite()
                            .children()
                            .iter()
                            .any(|&c| !self.cells[ch[c]].active)
                        {
                            irregular = true;
                        }
                        None
                    }
                    Neighbor::Coarser { cell: k, levels } => {
                        if levels > 1 {
                            irregular = true;
                        }
                        Some((
                            Adjacency::Hanging {
                                coarse: k,
                                fine: id,
                                coarse_is_minus: side.neighbor_is_minus(),
                            },
                            interior_normal,
                        ))
                    }
                };
                if let Some((adjacency, normal)) = adjacency {
                    edges.push(Edge {
                        id: edges.len(),
                        endpoints: seg,
                        normal,
                        adjacency,
                        length,
                    });
                }
            }
        }
        self.edges = edges;
        self.one_irregular = !irregular;
    }

    /// The active cell of this mesh that contains `cell` (of a finer mesh
    /// sharing this mesh's history), found by walking up parents.
    pub fn active_ancestor(&self, fine: &Mesh, cell: usize) -> Result<usize> {
        let mut id = cell;
        loop {
            if id < self.cells.len() && self.cells[id].active {
                let (a, b) = (&self.cells[id], &fine.cells[id]);
                if a.level != b.level || a.index != b.index {
                    return Err(Error::NotNested(format!(
                        "cell {id} differs between meshes"
                    )));
                }
                return Ok(id);
            }
            id = fine.cells.get(id).and_then(|c| c.parent).ok_or_else(|| {
                Error::NotNested(format!("cell {cell} has no ancestor in the coarse mesh"))
            })?;
        }
    }

    /// Checks that `fine` was obtained from `self` by refinement.
    pub fn is_refined_by(&self, fine: &Mesh) -> bool {
        self.nx == fine.nx
            && self.ny == fine.ny
            && self.domain == fine.domain
            && fine.cells.len() >= self.cells.len()
            && self
                .cells
                .iter()
                .zip(&fine.cells)
                .all(|(a, b)| a.level == b.level && a.index == b.index && (a.active || !b.active))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior(mesh: &Mesh) -> usize {
        mesh.active_edges()
            .iter()
            .filter(|e| !e.is_boundary())
            .count()
    }

    fn hanging(mesh: &Mesh) -> usize {
        mesh.active_edges()
            .iter()
            .filter(|e| matches!(e.adjacency, Adjacency::Hanging { .. }))
            .count()
    }

    #[test]
    fn uniform_counts() {
        let m = Mesh::uniform(1, 1, BBox::UNIT).unwrap();
        assert_eq!(m.n_active(), 1);
        assert_eq!(interior(&m), 0);

        let m = Mesh::uniform(2, 2, BBox::UNIT).unwrap();
        assert_eq!(m.n_active(), 4);
        assert_eq!(interior(&m), 4);
        assert_eq!(m.active_edges().len() - interior(&m), 8);

        let m = Mesh::uniform(32, 32, BBox::UNIT).unwrap();
        assert_eq!(m.n_active(), 1024);
    }

    #[test]
    fn zero_subdivision_rejected() {
        assert!(matches!(
            Mesh::uniform(0, 3, BBox::UNIT),
            Err(Error::InvalidSubdivision { .. })
        ));
    }

    #[test]
    fn refine_single_cell() {
        let m = Mesh::uniform(1, 1, BBox::UNIT).unwrap();
        let f = m.refine(&[0]).unwrap();
        assert_eq!(f.n_active(), 4);
        assert_eq!(interior(&f), 4);
        // old mesh untouched
        assert_eq!(m.n_active(), 1);
    }

    #[test]
    fn refine_one_of_four() {
        let m = Mesh::uniform(2, 2, BBox::UNIT).unwrap();
        let f = m.refine(&[0]).unwrap();
        assert_eq!(f.n_active(), 7);
        assert!(f.is_one_irregular());
        assert_eq!(hanging(&f), 4);
    }

    #[test]
    fn closure_refines_coarse_neighbor() {
        let m = Mesh::uniform(2, 2, BBox::UNIT).unwrap();
        let f = m.refine(&[0]).unwrap();
        // child 1 of cell 0 (south-east) touches the unrefined cell 1 on its right
        let se = f.cell(0).children.unwrap()[1];
        let g = f.refine(&[se]).unwrap();
        assert!(g.is_one_irregular());
        assert!(!g.cell(1).active, "closure must split the right neighbor");
        assert!(g.cell(2).active);
    }

    #[test]
    fn refine_inactive_is_error() {
        let m = Mesh::uniform(2, 2, BBox::UNIT).unwrap();
        let f = m.refine(&[0]).unwrap();
        assert!(matches!(f.refine(&[0]), Err(Error::InactiveCell(0))));
        assert!(matches!(f.refine(&[999]), Err(Error::InactiveCell(999))));
    }

    #[test]
    fn cell_sizes() {
        let m = Mesh::uniform(1, 1, BBox::UNIT).unwrap();
        assert!((cell_size(m.cell(0)) - 2f64.sqrt()).abs() < 1e-15);
        let m = Mesh::uniform(2, 2, BBox::UNIT).unwrap();
        assert!((m.cell(0).size() - 2f64.sqrt() / 2.0).abs() < 1e-15);
        let m = Mesh::uniform(4, 2, BBox::UNIT).unwrap();
        assert!((m.cell(0).size() - (0.0625f64 + 0.25).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn outward_normals_close_every_cell() {
        let m = Mesh::uniform(3, 2, BBox::new(0.0, 0.0, 1.5, 1.0)).unwrap();
        let f = m.refine(&[0, 4]).unwrap();
        let g = f.refine(&[f.cell(0).children.unwrap()[3]]).unwrap();
        let mut flux = vec![[0.0f64; 2]; g.cells().len()];
        for e in g.active_edges() {
            let w = [e.normal[0] * e.length, e.normal[1] * e.length];
            match e.sides() {
                None => {
                    let Adjacency::Boundary { cell } = e.adjacency else {
                        unreachable!()
                    };
                    flux[cell][0] += w[0];
                    flux[cell][1] += w[1];
                }
                Some((minus, plus)) => {
                    flux[minus][0] += w[0];
                    flux[minus][1] += w[1];
                    flux[plus][0] -= w[0];
                    flux[plus][1] -= w[1];
                }
            }
        }
        for id in g.active_cells() {
            assert!(
                flux[id][0].abs() < 1e-14 && flux[id][1].abs() < 1e-14,
                "cell {id}: {:?}",
                flux[id]
            );
        }
    }
}
