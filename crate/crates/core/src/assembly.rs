//! Global energy, residual and Hessian assembly over the condensed
//! (free) DOFs, and the sparse direct solve.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::SolveCore;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};
use crate::fespace::{
    build_constraints, eval_basis, quadrature_rule, BasisEval, BoundaryData, ConstraintSet, DofMap,
    Field, FieldLayout, QuadratureRule,
};
use crate::mesh::Mesh;
use crate::physics::{
    constraint_energy_density, energy_jet, jet_grad_n, jet_grad_phi, jet_n, model_energy_density,
    Formulation, MaterialParams, PointFields, JET_LAMBDA, NJ,
};

/// Reference basis tables at the cell quadrature points.
#[derive(Clone, Debug)]
pub struct BasisTables {
    pub rule: QuadratureRule,
    pub q2: Vec<BasisEval>,
    pub q1: Vec<BasisEval>,
}

impl BasisTables {
    pub fn new(n_1d: usize) -> Result<Self> {
        let rule = quadrature_rule(n_1d)?;
        let q2 = rule
            .points
            .iter()
            .map(|&p| eval_basis(2, p))
            .collect::<Result<_>>()?;
        let q1 = rule
            .points
            .iter()
            .map(|&p| eval_basis(1, p))
            .collect::<Result<_>>()?;
        Ok(Self { rule, q2, q1 })
    }

    fn table(&self, degree: usize) -> &[BasisEval] {
        if degree == 1 {
            &self.q1
        } else {
            &self.q2
        }
    }
}

/// CSR sparsity pattern of a square, structurally symmetric matrix. The
/// same arrays read as CSC describe the transpose.
#[derive(Debug)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    /// Position of the diagonal entry in each row.
    diag: Vec<u32>,
    symbolic: OnceLock<std::result::Result<SymbolicLu<u32>, String>>,
    symbolic_sym: OnceLock<std::result::Result<SymbolicCholesky<u32>, String>>,
}

impl Pattern {
    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0u32);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut diag = Vec::with_capacity(n);
        for (i, mut r) in rows.into_iter().enumerate() {
            r.push(i as u32);
            r.sort_unstable();
            r.dedup();
            let start = col_idx.len();
            diag.push((start + r.binary_search(&(i as u32)).unwrap()) as u32);
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len() as u32);
        }
        Self {
            n,
            row_ptr,
            col_idx,
            diag,
            symbolic: OnceLock::new(),
            symbolic_sym: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.diag[i] as usize;
        let hi = self.row_ptr[i + 1] as usize;
        self.col_idx[lo..hi]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| lo + k)
    }

    fn symbolic_lu(&self) -> Result<SymbolicLu<u32>> {
        self.symbolic
            .get_or_init(|| {
                let sym = SymbolicSparseColMatRef::new_checked(
                    self.n,
                    self.n,
                    &self.row_ptr,
                    None,
                    &self.col_idx,
                );
                SymbolicLu::try_new(sym).map_err(|e| format!("{e:?}"))
            })
            .clone()
            .map_err(Error::SingularMatrix)
    }

    fn symbolic_sym(&self) -> Result<&SymbolicCholesky<u32>> {
        self.symbolic_sym
            .get_or_init(|| {
                let sym = SymbolicSparseColMatRef::new_checked(
                    self.n,
                    self.n,
                    &self.row_ptr,
                    None,
                    &self.col_idx,
                );
                let params = CholeskySymbolicParams {
                    supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                    ..Default::default()
                };
                factorize_symbolic_cholesky(sym, Side::Upper, SymmetricOrdering::Amd, params)
                    .map_err(|e| format!("{e:?}"))
            })
            .as_ref()
            .map_err(|e| Error::SingularMatrix(e.clone()))
    }
}

/// Symmetric sparse matrix on a shared [`Pattern`].
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// From dense rows; intended for small systems and tests.
    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows = a
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        let pattern = Arc::new(Pattern::from_rows(rows));
        let mut m = Self::zeros(pattern);
        for (i, r) in a.iter().enumerate() {
            let s = m.pattern.row_ptr[i] as usize;
            for (k, &j) in m.pattern.row(i).iter().enumerate() {
                m.values[s + k] = r[j as usize];
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.pattern.row(i);
        match r.binary_search(&(j as u32)) {
            Ok(k) => self.values[self.pattern.row_ptr[i] as usize + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let s = self.pattern.row_ptr[i] as usize;
                self.pattern
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| self.values[s + k] * x[j as usize])
                    .sum()
            })
            .collect()
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n()).all(|i| {
            let s = self.pattern.row_ptr[i] as usize;
            self.pattern
                .row(i)
                .iter()
                .enumerate()
                .all(|(k, &j)| self.get(j as usize, i) == self.values[s + k])
        })
    }

    fn add_upper(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = self.pattern.find(i, j).expect("entry in pattern");
        self.values[k] += v;
    }

    /// Copies the upper triangle onto the lower one.
    fn mirror_upper(&mut self) {
        for i in 0..self.n() {
            let s = self.pattern.diag[i] as usize + 1;
            let e = self.pattern.row_ptr[i + 1] as usize;
            for k in s..e {
                let j = self.pattern.col_idx[k] as usize;
                let r = self.pattern.row(j);
                let pos = self.pattern.row_ptr[j] as usize + r.binary_search(&(i as u32)).unwrap();
                self.values[pos] = self.values[k];
            }
        }
    }

    /// Matrix Market coordinate export.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n(), self.n(), self.nnz())?;
        for i in 0..self.n() {
            let s = self.pattern.row_ptr[i] as usize;
            for (k, &j) in self.pattern.row(i).iter().enumerate() {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, self.values[s + k])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves `A x = b` with one step of iterative refinement.
///
/// Symmetric matrices go through a supernodal Bunch-Kaufman `LBL^T` on an AMD
/// ordering; if that fails, or `A` is not symmetric, sparse LU with partial
/// pivoting is used. Symbolic factorizations are cached on the pattern.
pub fn solve_linear(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            rows: n,
            cols: n,
            rhs: b.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.is_symmetric() {
        if let Ok(x) = solve_symmetric(a, b) {
            return Ok(x);
        }
    }
    solve_lu(a, b)
}

fn refine_and_check(a: &SparseMatrix, b: &[f64], solve: impl Fn(&mut [f64])) -> Result<Vec<f64>> {
    let mut x = b.to_vec();
    solve(&mut x);
    let mut r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, b)| b - ax).collect();
    solve(&mut r);
    for (xi, ri) in x.iter_mut().zip(&r) {
        *xi += ri;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix("non-finite solution".into()));
    }
    let res: f64 = a
        .matvec(&x)
        .iter()
        .zip(b)
        .map(|(ax, b)| (b - ax) * (b - ax))
        .sum::<f64>()
        .sqrt();
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res > 1e-6 * bn.max(f64::MIN_POSITIVE) && res > 1e-300 {
        return Err(Error::SingularMatrix(format!(
            "residual {res:.3e} after refinement"
        )));
    }
    Ok(x)
}

fn solve_symmetric(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    let symbolic = a.pattern.symbolic_sym()?;
    let sym =
        SymbolicSparseColMatRef::new_checked(n, n, &a.pattern.row_ptr, None, &a.pattern.col_idx);
    let mat = SparseColMatRef::new(sym, &a.values);
    let mut l_values = vec![0.0; symbolic.len_val()];
    let mut subdiag = vec![0.0; n];
    let mut fwd = vec![0u32; n];
    let mut inv = vec![0u32; n];
    let factor_req =
        symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default());
    let solve_req = symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
    let mut buf = MemBuffer::try_new(factor_req.or(solve_req))
        .map_err(|_| Error::SingularMatrix("out of memory".into()))?;
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        symbolic.factorize_numeric_intranode_lblt(
            &mut l_values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            mat,
            Side::Upper,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
    }))
    .map_err(|_| Error::SingularMatrix("LBLT factorization failed".into()))?;
    drop(buf);
    let lblt = IntranodeLbltRef::new(
        symbolic,
        &l_values,
        &subdiag,
        PermRef::new_checked(&fwd, &inv, n),
    );
    let buf = std::cell::RefCell::new(MemBuffer::new(solve_req));
    refine_and_check(a, b, |rhs| {
        let m = MatMut::from_column_major_slice_mut(rhs, n, 1);
        lblt.solve_in_place_with_conj(Conj::No, m, Par::Seq, MemStack::new(&mut buf.borrow_mut()));
    })
}

fn solve_lu(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    let symbolic = a.pattern.symbolic_lu()?;
    let sym =
        SymbolicSparseColMatRef::new_checked(n, n, &a.pattern.row_ptr, None, &a.pattern.col_idx);
    let mat = SparseColMatRef::new(sym, &a.values);
    // the numeric factorization panics on an exactly zero pivot
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        Lu::try_new_with_symbolic(symbolic, mat)
    }))
    .map_err(|_| Error::SingularMatrix("zero pivot".into()))?
    .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
    // the stored arrays are the CSC form of A^T
    refine_and_check(a, b, |rhs| {
        let m = MatMut::from_column_major_slice_mut(rhs, n, 1);
        lu.solve_transpose_in_place_with_conj(Conj::No, m);
    })
}

/// Everything tied to one mesh: DOFs, constraints, sparsity and basis tables.
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub constraints: ConstraintSet,
    pub tables: Arc<BasisTables>,
    pattern: OnceLock<Arc<Pattern>>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("cells", &self.mesh.n_active())
            .field("dofs", &self.dofs.n_dofs())
            .field("free", &self.constraints.n_free())
            .finish()
    }
}

impl Discretization {
    pub fn new(
        mesh: Mesh,
        layout: FieldLayout,
        boundary: &dyn BoundaryData,
        tables: Arc<BasisTables>,
    ) -> Result<Self> {
        let dofs = DofMap::new(&mesh, layout);
        let constraints = build_constraints(&mesh, &dofs, boundary)?;
        Ok(Self {
            mesh,
            dofs,
            constraints,
            tables,
            pattern: OnceLock::new(),
        })
    }

    pub fn n_free(&self) -> usize {
        self.constraints.n_free()
    }

    /// Free indices reached from each local DOF of the cell at `pos`.
    fn local_map(&self, pos: usize) -> Vec<(Field, usize, usize)> {
        let mut out = Vec::with_capacity(40);
        for &field in self.dofs.fields() {
            for (l, d) in self.dofs.cell_dofs(pos, field).enumerate() {
                out.push((field, l, d));
            }
        }
        out
    }

    /// Sparsity over free DOFs: every field pair except multiplier-multiplier.
    pub fn pattern(&self) -> Arc<Pattern> {
        self.pattern
            .get_or_init(|| {
                let n = self.n_free();
                let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
                for pos in 0..self.dofs.active_cells().len() {
                    let mut free: Vec<(u32, bool)> = Vec::with_capacity(64);
                    for (field, _, d) in self.local_map(pos) {
                        let (idx, _, _) = self.constraints.expansion(d);
                        for &k in idx {
                            free.push((k, field == Field::Multiplier));
                        }
                    }
                    free.sort_unstable();
                    free.dedup();
                    for &(k, lk) in &free {
                        for &(l, ll) in &free {
                            if !(lk && ll) {
                                rows[k as usize].push(l);
                            }
                        }
                    }
                    for &(k, _) in &free {
                        let r = &mut rows[k as usize];
                        if r.len() > 256 {
                            r.sort_unstable();
                            r.dedup();
                        }
                    }
                }
                Arc::new(Pattern::from_rows(rows))
            })
            .clone()
    }

    /// Field values and first derivatives at quadrature point `q` of the cell at `pos`.
    pub(crate) fn point_fields(&self, pos: usize, q: usize, values: &[f64]) -> PointFields {
        self.fields_from(pos, values, |d| &self.tables.table(d)[q], false)
    }

    /// Values with second derivatives at quadrature point `q` of the cell at `pos`.
    pub(crate) fn point_fields_full(&self, pos: usize, q: usize, values: &[f64]) -> PointFields {
        self.fields_from(pos, values, |d| &self.tables.table(d)[q], true)
    }

    /// Values with second derivatives at reference point `r` of the cell at `pos`.
    pub fn point_fields_at(&self, pos: usize, r: [f64; 2], values: &[f64]) -> PointFields {
        let q2 = eval_basis(2, r).expect("degree 2");
        let q1 = eval_basis(1, r).expect("degree 1");
        self.fields_from(pos, values, |d| if d == 1 { &q1 } else { &q2 }, true)
    }

    fn fields_from<'b>(
        &self,
        pos: usize,
        values: &[f64],
        table: impl Fn(usize) -> &'b BasisEval,
        second: bool,
    ) -> PointFields {
        let cell = self.mesh.cell(self.dofs.active_cells()[pos]);
        let (hx, hy) = (cell.bbox.width(), cell.bbox.height());
        let mut pt = PointFields::default();
        let mut hn = [[0.0; 3]; 3];
        let mut hp = [0.0; 3];
        for &field in self.dofs.fields() {
            let tab = table(field.degree());
            let mut h = [0.0; 3];
            if second {
                for (l, d) in self.dofs.cell_dofs(pos, field).enumerate() {
                    let c = values[d];
                    let t = tab.hessians[l];
                    h[0] += c * t[0];
                    h[1] += c * t[1];
                    h[2] += c * t[2];
                }
                h = [h[0] / (hx * hx), h[1] / (hx * hy), h[2] / (hy * hy)];
            }
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for (l, d) in self.dofs.cell_dofs(pos, field).enumerate() {
                let c = values[d];
                v += c * tab.values[l];
                gx += c * tab.grads[l][0];
                gy += c * tab.grads[l][1];
            }
            let g = [gx / hx, gy / hy];
            match field {
                Field::N1 | Field::N2 | Field::N3 => {
                    let i = field.component().unwrap();
                    pt.n[i] = v;
                    pt.grad_n[i] = g;
                    hn[i] = h;
                }
                Field::Potential => {
                    pt.phi = v;
                    pt.grad_phi = g;
                    hp = h;
                }
                Field::Multiplier => pt.lambda = v,
            }
        }
        if second {
            pt.hess_n = Some(hn);
            pt.hess_phi = Some(hp);
        }
        pt
    }
}

/// Model energy and the constraint term, integrated over the mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyParts {
    pub model: f64,
    pub constraint: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.model + self.constraint
    }
}

pub fn assemble_energy(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
) -> EnergyParts {
    let mut e = EnergyParts::default();
    let w = &disc.tables.rule.weights;
    for (pos, &c) in disc.dofs.active_cells().iter().enumerate() {
        let area = disc.mesh.cell(c).bbox.area();
        for (q, &wq) in w.iter().enumerate() {
            let pt = disc.point_fields(pos, q, values);
            e.model += wq * area * model_energy_density(params, &pt);
            e.constraint += wq * area * constraint_energy_density(params, &pt);
        }
    }
    e
}

/// `||n.n - 1||_{L2}` over the mesh.
pub fn unit_length_defect(disc: &Discretization, values: &[f64]) -> f64 {
    let w = &disc.tables.rule.weights;
    let mut s = 0.0;
    for (pos, &c) in disc.dofs.active_cells().iter().enumerate() {
        let area = disc.mesh.cell(c).bbox.area();
        for (q, &wq) in w.iter().enumerate() {
            let m = disc.point_fields(pos, q, values).unit_defect();
            s += wq * area * m * m;
        }
    }
    s.sqrt()
}

/// Jet slots touched by one local basis function, with coefficients.
fn local_jet(
    field: Field,
    tab: &BasisEval,
    l: usize,
    hx: f64,
    hy: f64,
) -> ([(usize, f64); 3], usize) {
    let (v, gx, gy) = (tab.values[l], tab.grads[l][0] / hx, tab.grads[l][1] / hy);
    match field {
        Field::N1 | Field::N2 | Field::N3 => {
            let i = field.component().unwrap();
            (
                [
                    (jet_n(i), v),
                    (jet_grad_n(i, 0), gx),
                    (jet_grad_n(i, 1), gy),
                ],
                3,
            )
        }
        Field::Potential => ([(jet_grad_phi(0), gx), (jet_grad_phi(1), gy), (0, 0.0)], 2),
        Field::Multiplier => ([(JET_LAMBDA, v), (0, 0.0), (0, 0.0)], 1),
    }
}

fn check_layout(disc: &Discretization, params: &MaterialParams) -> Result<()> {
    let layout = disc.dofs.layout();
    if params.electric && !layout.electric {
        return Err(Error::ElectricDisabled);
    }
    if (params.formulation == Formulation::Lagrangian) != layout.multiplier {
        return Err(Error::NotNested(
            "field layout does not match the formulation".into(),
        ));
    }
    Ok(())
}

/// Condensed gradient of the discrete energy (the weak residual tested
/// against every free basis function).
pub fn assemble_residual(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
) -> Result<Vec<f64>> {
    Ok(assemble(disc, params, values, false)?.1)
}

/// Condensed Hessian and gradient.
pub fn assemble_system(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    let (m, r) = assemble(disc, params, values, true)?;
    Ok((m.expect("matrix"), r))
}

fn assemble(
    disc: &Discretization,
    params: &MaterialParams,
    values: &[f64],
    with_matrix: bool,
) -> Result<(Option<SparseMatrix>, Vec<f64>)> {
    check_layout(disc, params)?;
    let cs = &disc.constraints;
    let mut rhs = vec![0.0; cs.n_free()];
    let mut mat = with_matrix.then(|| SparseMatrix::zeros(disc.pattern()));
    let weights = &disc.tables.rule.weights;

    for (pos, &cid) in disc.dofs.active_cells().iter().enumerate() {
        let bbox = disc.mesh.cell(cid).bbox;
        let (hx, hy, area) = (bbox.width(), bbox.height(), bbox.area());
        let local = disc.local_map(pos);
        let nl = local.len();
        let mut r_loc = vec![0.0; nl];
        let mut k_loc = if with_matrix {
            vec![0.0; nl * nl]
        } else {
            Vec::new()
        };
        let mut jets = Vec::with_capacity(nl);
        let mut hb = vec![[0.0; NJ]; nl];

        for (q, &wq) in weights.iter().enumerate() {
            let pt = disc.point_fields(pos, q, values);
            let ej = energy_jet(params, &pt);
            let w = wq * area;
            jets.clear();
            for &(field, l, _) in &local {
                jets.push(local_jet(
                    field,
                    &disc.tables.table(field.degree())[q],
                    l,
                    hx,
                    hy,
                ));
            }
            for (a, (slots, ns)) in jets.iter().enumerate() {
                r_loc[a] += w * slots[..*ns]
                    .iter()
                    .map(|&(s, c)| c * ej.grad[s])
                    .sum::<f64>();
            }
            if with_matrix {
                for (b, (slots, ns)) in jets.iter().enumerate() {
                    let mut h = [0.0; NJ];
                    for &(s, c) in &slots[..*ns] {
                        for (hk, row) in h.iter_mut().zip(&ej.hess) {
                            *hk += c * row[s];
                        }
                    }
                    hb[b] = h;
                }
                for a in 0..nl {
                    let (sa, na) = jets[a];
                    for b in a..nl {
                        let v: f64 = sa[..na].iter().map(|&(s, c)| c * hb[b][s]).sum();
                        k_loc[a * nl + b] += w * v;
                    }
                }
            }
        }

        for a in 0..nl {
            let (ia, wa, _) = cs.expansion(local[a].2);
            for (&k, &w) in ia.iter().zip(wa) {
                rhs[k as usize] += w * r_loc[a];
            }
        }
        if let Some(m) = mat.as_mut() {
            for a in 0..nl {
                let (ia, wa, _) = cs.expansion(local[a].2);
                if ia.is_empty() {
                    continue;
                }
                for b in a..nl {
                    let kab = k_loc[a * nl + b];
                    if kab == 0.0 {
                        continue;
                    }
                    let (ib, wb, _) = cs.expansion(local[b].2);
                    for (&k, &x) in ia.iter().zip(wa) {
                        for (&l, &y) in ib.iter().zip(wb) {
                            let v = x * y * kab;
                            if a == b {
                                if k <= l {
                                    m.add_upper(k as usize, l as usize, v);
                                }
                            } else if k == l {
                                m.add_upper(k as usize, l as usize, 2.0 * v);
                            } else {
                                m.add_upper(k as usize, l as usize, v);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(m) = mat.as_mut() {
        m.mirror_upper();
    }
    Ok((mat, rhs))
}
