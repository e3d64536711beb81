//! Damped Newton per level and the nested-iteration driver.

use std::sync::Arc;
use std::time::Instant;

use crate::adapt::{MarkingConfig, WorkLedger};
use crate::assembly::{
    assemble_energy, assemble_residual, assemble_system, solve_linear, BasisTables, Discretization,
};
use crate::bench::{h1_error, ExactSolution};
use crate::error::{Error, Result};
use crate::estimator::{gauss_conformance, global_estimate, local_estimates, LocalEstimate};
use crate::fespace::{interpolate, transfer_solution, BoundaryData, Field, FieldLayout};
use crate::mesh::{BBox, Mesh};
use crate::physics::{Formulation, MaterialParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub alpha0: f64,
    pub alpha_step: f64,
    pub alpha_max: f64,
    pub max_iters: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            alpha0: 0.2,
            alpha_step: 0.2,
            alpha_max: 1.0,
            max_iters: 200,
        }
    }
}

impl NewtonConfig {
    /// Damping factor used on nested-iteration level `level`.
    pub fn alpha(&self, level: usize) -> f64 {
        (self.alpha0 + self.alpha_step * level as f64).min(self.alpha_max)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonLog {
    pub iterations: usize,
    /// Residual norm before every step and after the last one.
    pub residuals: Vec<f64>,
    /// Hessian non-zeros of every step.
    pub nnz: Vec<usize>,
    pub converged: bool,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton with a fixed step `alpha`. `values` must satisfy the constraints.
pub fn newton_solve(
    disc: &Discretization,
    params: &MaterialParams,
    values: &mut [f64],
    alpha: f64,
    cfg: &NewtonConfig,
) -> Result<NewtonLog> {
    let mut log = NewtonLog::default();
    let mut free = disc.constraints.extract(values);
    loop {
        let (r, system) = if log.iterations < cfg.max_iters {
            let (a, r) = assemble_system(disc, params, values)?;
            (r, Some(a))
        } else {
            (assemble_residual(disc, params, values)?, None)
        };
        let norm = l2(&r);
        log.residuals.push(norm);
        if !norm.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: log.iterations,
                residual: norm,
            });
        }
        if norm <= cfg.tol {
            log.converged = true;
            return Ok(log);
        }
        let Some(a) = system else {
            return Ok(log);
        };
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_linear(&a, &rhs)?;
        log.nnz.push(a.nnz());
        for (f, d) in free.iter_mut().zip(&delta) {
            *f += alpha * d;
        }
        disc.constraints.distribute(&free, values);
        log.iterations += 1;
    }
}

/// Physical setup of a run.
#[derive(Clone)]
pub struct Problem {
    pub params: MaterialParams,
    pub boundary: Arc<dyn BoundaryData>,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub initial: InitialGuess,
    pub domain: BBox,
}

impl Problem {
    pub fn layout(&self) -> FieldLayout {
        FieldLayout {
            electric: self.params.electric,
            multiplier: self.params.formulation == Formulation::Lagrangian,
        }
    }
}

/// First iterate on the coarse mesh. Boundary DOFs always carry the Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialGuess {
    /// Constant interior director (normalized), `phi = 0`, `lambda = 0`.
    Uniform([f64; 3]),
    /// Planar boundary directors only: the boundary angle `t` of `n = (sin t, cos t, 0)`
    /// is unwrapped along the perimeter and extended harmonically into the interior.
    AngleLift,
    /// Potential solved with the uniform director `(0,0,1)` fixed, then
    /// `n = (grad phi, kappa * max |grad phi|)` normalized at every node.
    FieldAligned { kappa: f64 },
}

impl Default for InitialGuess {
    fn default() -> Self {
        InitialGuess::Uniform([0.0, 0.0, 1.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refinement {
    Uniform,
    Adaptive(MarkingConfig),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestedConfig {
    pub coarse: (usize, usize),
    pub refinement: Refinement,
    /// Total number of levels including the coarse one.
    pub max_levels: usize,
    /// Stop after the first level whose raw DOF count exceeds this.
    pub dof_budget: Option<usize>,
    pub newton: NewtonConfig,
    pub quadrature: usize,
    /// Continue to the next level after a Newton failure instead of aborting.
    pub continue_on_failure: bool,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            coarse: (32, 32),
            refinement: Refinement::Uniform,
            max_levels: 3,
            dof_budget: None,
            newton: NewtonConfig::default(),
            quadrature: 5,
            continue_on_failure: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub cells: usize,
    pub raw_dofs: usize,
    pub free_dofs: usize,
    pub alpha: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// Model energy.
    pub energy: f64,
    /// Energy including the penalty or multiplier term.
    pub augmented_energy: f64,
    pub estimate: f64,
    pub h1_error: Option<f64>,
    pub gauss: Option<f64>,
    pub nnz: usize,
    pub cumulative_nnz: usize,
    /// Largest `|n| - 1` above and below unit length at quadrature points.
    pub max_deviation_above: f64,
    pub max_deviation_below: f64,
    /// `max |n.n - 1|` at quadrature points on the previous mesh and right after transfer.
    pub defect_before_transfer: Option<f64>,
    pub defect_after_transfer: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub levels: Vec<LevelRecord>,
    pub ledger: WorkLedger,
    pub failure: Option<String>,
}

impl RunReport {
    pub fn last(&self) -> Option<&LevelRecord> {
        self.levels.last()
    }
}

/// Converged state of one level, handed to the observer.
pub struct LevelSnapshot<'a> {
    pub record: &'a LevelRecord,
    pub disc: &'a Discretization,
    pub values: &'a [f64],
    pub estimates: &'a [LocalEstimate],
    /// Squared H1 error per active cell, when an exact solution is known.
    pub h1_cells: Option<&'a [f64]>,
}

/// Largest `|n|-1` above and below unit length, and `max |n.n-1|`, at quadrature points.
pub fn unit_deviation(disc: &Discretization, values: &[f64]) -> (f64, f64, f64) {
    let nq = disc.tables.rule.weights.len();
    let (mut above, mut below, mut defect) = (0.0f64, 0.0f64, 0.0f64);
    for pos in 0..disc.dofs.active_cells().len() {
        for q in 0..nq {
            let n = disc.point_fields(pos, q, values).n;
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            above = above.max(len - 1.0);
            below = below.max(1.0 - len);
            defect = defect.max((len * len - 1.0).abs());
        }
    }
    (above, below, defect)
}

fn initial_values(problem: &Problem, disc: &Discretization) -> Result<Vec<f64>> {
    let mut v = match problem.initial {
        InitialGuess::Uniform(d) => {
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let d = if len > 0.0 {
                [d[0] / len, d[1] / len, d[2] / len]
            } else {
                d
            };
            interpolate(&disc.dofs, |f, _| match f {
                Field::N1 => d[0],
                Field::N2 => d[1],
                Field::N3 => d[2],
                _ => 0.0,
            })
        }
        InitialGuess::AngleLift => angle_lift(problem, disc)?,
        InitialGuess::FieldAligned { kappa } => field_aligned(problem, disc, kappa)?,
    };
    disc.constraints.apply(&mut v);
    Ok(v)
}

/// Perimeter coordinate in `[0, 4)`, counter-clockwise from the lower-left corner.
fn perimeter_coordinate(b: &BBox, p: [f64; 2]) -> f64 {
    let (u, w) = ((p[0] - b.x0) / b.width(), (p[1] - b.y0) / b.height());
    let tol = 1e-12;
    if w <= tol {
        u
    } else if u >= 1.0 - tol {
        1.0 + w
    } else if w >= 1.0 - tol {
        3.0 - u
    } else {
        4.0 - w
    }
}

fn perimeter_point(b: &BBox, s: f64) -> [f64; 2] {
    let (u, w) = match s {
        s if s < 1.0 => (s, 0.0),
        s if s < 2.0 => (1.0, s - 1.0),
        s if s < 3.0 => (3.0 - s, 1.0),
        s => (0.0, 4.0 - s),
    };
    [b.x0 + u * b.width(), b.y0 + w * b.height()]
}

/// Continuous boundary angle, stored as the first director component.
struct BoundaryAngle {
    domain: BBox,
    samples: Vec<f64>,
    boundary: Arc<dyn BoundaryData>,
}

impl BoundaryAngle {
    const PER_SIDE: usize = 4096;

    fn new(domain: BBox, boundary: Arc<dyn BoundaryData>) -> Result<Self> {
        let m = 4 * Self::PER_SIDE;
        let mut samples: Vec<f64> = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let n = boundary.director(perimeter_point(&domain, 4.0 * k as f64 / m as f64));
            if n[2].abs() > 1e-12 || n[0].hypot(n[1]) < 1e-12 {
                return Err(Error::InitialGuess(
                    "angle lift needs planar, non-vanishing boundary directors".into(),
                ));
            }
            let raw = n[0].atan2(n[1]);
            let t = match samples.last() {
                Some(&prev) => {
                    raw + std::f64::consts::TAU * ((prev - raw) / std::f64::consts::TAU).round()
                }
                None => raw,
            };
            samples.push(t);
        }
        if (samples[m] - samples[0]).abs() > 1e-6 {
            return Err(Error::InitialGuess(
                "boundary director has non-zero winding".into(),
            ));
        }
        Ok(Self {
            domain,
            samples,
            boundary,
        })
    }

    fn angle(&self, p: [f64; 2]) -> f64 {
        let m = self.samples.len() - 1;
        let x = perimeter_coordinate(&self.domain, p) / 4.0 * m as f64;
        let k = (x.floor() as usize).min(m - 1);
        let f = x - k as f64;
        let guess = (1.0 - f) * self.samples[k] + f * self.samples[k + 1];
        let n = self.boundary.director(p);
        let raw = n[0].atan2(n[1]);
        raw + std::f64::consts::TAU * ((guess - raw) / std::f64::consts::TAU).round()
    }
}

impl BoundaryData for BoundaryAngle {
    fn director(&self, p: [f64; 2]) -> [f64; 3] {
        [self.angle(p), 0.0, 0.0]
    }
}

/// Discrete harmonic extension of the first director component of `data`, at the Q2 nodes.
fn harmonic_extension(disc: &Discretization, data: &dyn BoundaryData) -> Result<Vec<f64>> {
    let lift = Discretization::new(
        disc.mesh.clone(),
        FieldLayout {
            electric: false,
            multiplier: false,
        },
        data,
        disc.tables.clone(),
    )?;
    let mut t = vec![0.0; lift.dofs.n_dofs()];
    lift.constraints.apply(&mut t);
    let laplace = MaterialParams::elastic(Formulation::Penalty, 0.0);
    let one_step = NewtonConfig {
        max_iters: 1,
        ..NewtonConfig::default()
    };
    newton_solve(&lift, &laplace, &mut t, 1.0, &one_step)?;
    let src = lift.dofs.offset(Field::N1).expect("director field");
    Ok(t[src..src + lift.dofs.n_q2_nodes()].to_vec())
}

fn angle_lift(problem: &Problem, disc: &Discretization) -> Result<Vec<f64>> {
    let data = BoundaryAngle::new(problem.domain, problem.boundary.clone())?;
    let t = harmonic_extension(disc, &data)?;
    let mut v = vec![0.0; disc.dofs.n_dofs()];
    let (o1, o2) = (
        disc.dofs.offset(Field::N1).expect("director field"),
        disc.dofs.offset(Field::N2).expect("director field"),
    );
    for (i, t) in t.iter().enumerate() {
        let (s, c) = t.sin_cos();
        v[o1 + i] = s;
        v[o2 + i] = c;
    }
    Ok(v)
}

/// Boundary potential moved into the first director slot.
struct PotentialAsDirector(Arc<dyn BoundaryData>);

impl BoundaryData for PotentialAsDirector {
    fn director(&self, p: [f64; 2]) -> [f64; 3] {
        [self.0.potential(p), 0.0, 0.0]
    }
}

fn field_aligned(problem: &Problem, disc: &Discretization, kappa: f64) -> Result<Vec<f64>> {
    if !problem.params.electric {
        return Err(Error::InitialGuess(
            "field alignment needs the electric field".into(),
        ));
    }
    if !(kappa > 0.0) {
        return Err(Error::InitialGuess(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    // with a constant director the potential is harmonic
    let phi = harmonic_extension(disc, &PotentialAsDirector(problem.boundary.clone()))?;
    let mut v = vec![0.0; disc.dofs.n_dofs()];
    let pot = disc.dofs.offset(Field::Potential).expect("potential");
    let q2 = disc.dofs.n_q2_nodes();
    v[pot..pot + q2].copy_from_slice(&phi);

    let cells = disc.dofs.active_cells();
    let grad = |p: [f64; 2]| {
        let (mut g, mut k) = ([0.0; 2], 0.0);
        for (pos, &cid) in cells.iter().enumerate() {
            let b = disc.mesh.cell(cid).bbox;
            if b.contains(p, 1e-12) {
                let r = b.to_reference(p).map(|t| t.clamp(0.0, 1.0));
                let gp = disc.point_fields_at(pos, r, &v).grad_phi;
                g = [g[0] + gp[0], g[1] + gp[1]];
                k += 1.0;
            }
        }
        [g[0] / k, g[1] / k]
    };
    let grads: Vec<[f64; 2]> = (0..q2).map(|i| grad(disc.dofs.node_point(2, i))).collect();
    let scale = kappa * grads.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::InitialGuess("boundary potential is constant".into()));
    }
    let offsets =
        [Field::N1, Field::N2, Field::N3].map(|f| disc.dofs.offset(f).expect("director field"));
    for (i, g) in grads.iter().enumerate() {
        let len = (g[0] * g[0] + g[1] * g[1] + scale * scale).sqrt();
        for (c, x) in [g[0], g[1], scale].into_iter().enumerate() {
            v[offsets[c] + i] = x / len;
        }
    }
    Ok(v)
}

/// Nested iteration: solve, estimate, mark, refine, transfer, repeat.
///
/// On a Newton failure the partial report is returned with `failure` set
/// unless `continue_on_failure`; linear-algebra errors abort with level context.
pub fn nested_iteration(
    problem: &Problem,
    cfg: &NestedConfig,
    observer: &mut dyn FnMut(&LevelSnapshot) -> Result<()>,
) -> Result<RunReport> {
    problem.params.validate().map_err(Error::InvalidParams)?;
    let tables = Arc::new(BasisTables::new(cfg.quadrature)?);
    let mesh = Mesh::uniform(cfg.coarse.0, cfg.coarse.1, problem.domain)?;
    let mut disc = Discretization::new(
        mesh,
        problem.layout(),
        problem.boundary.as_ref(),
        tables.clone(),
    )?;
    let mut values = initial_values(problem, &disc)?;
    let mut report = RunReport::default();
    let mut transfer_defects: (Option<f64>, Option<f64>) = (None, None);

    for level in 0..cfg.max_levels.max(1) {
        let start = Instant::now();
        let alpha = cfg.newton.alpha(level);
        let log = newton_solve(&disc, &problem.params, &mut values, alpha, &cfg.newton)
            .map_err(|e| e.at_level(level))?;
        report.ledger.open_level(level);
        for &n in &log.nnz {
            report.ledger.record(level, n);
        }

        let estimates =
            local_estimates(&disc, &problem.params, &values).map_err(|e| e.at_level(level))?;
        let energy = assemble_energy(&disc, &problem.params, &values);
        let (h1_cells, h1) = match &problem.exact {
            Some(ex) => {
                let (c, t) = h1_error(&disc, &values, ex.as_ref());
                (Some(c), Some(t))
            }
            None => (None, None),
        };
        let gauss = if problem.params.electric {
            Some(gauss_conformance(&disc, &problem.params, &values)?)
        } else {
            None
        };
        let (above, below, _) = unit_deviation(&disc, &values);
        let nnz = disc.pattern().nnz();
        let record = LevelRecord {
            level,
            cells: disc.mesh.n_active(),
            raw_dofs: disc.dofs.n_dofs(),
            free_dofs: disc.n_free(),
            alpha,
            newton_iterations: log.iterations,
            converged: log.converged,
            residual: *log.residuals.last().unwrap_or(&f64::NAN),
            energy: energy.model,
            augmented_energy: energy.total(),
            estimate: global_estimate(&estimates),
            h1_error: h1,
            gauss,
            nnz,
            cumulative_nnz: report.ledger.total_nnz(),
            max_deviation_above: above,
            max_deviation_below: below,
            defect_before_transfer: transfer_defects.0,
            defect_after_transfer: transfer_defects.1,
            seconds: 0.0,
        };
        report.levels.push(record);
        let converged = log.converged;
        {
            let rec = report.levels.last_mut().unwrap();
            rec.seconds = start.elapsed().as_secs_f64();
        }
        observer(&LevelSnapshot {
            record: report.levels.last().unwrap(),
            disc: &disc,
            values: &values,
            estimates: &estimates,
            h1_cells: h1_cells.as_deref(),
        })?;

        if !converged {
            let msg = format!(
                "level {level}: Newton did not converge in {} steps (residual {:.3e})",
                log.iterations,
                report.levels.last().unwrap().residual
            );
            if !cfg.continue_on_failure {
                report.failure = Some(msg);
                return Ok(report);
            }
        }
        if level + 1 >= cfg.max_levels {
            break;
        }
        if let Some(budget) = cfg.dof_budget {
            if disc.dofs.n_dofs() > budget {
                break;
            }
        }

        let fine_mesh = match cfg.refinement {
            Refinement::Uniform => disc.mesh.refine_uniform(),
            Refinement::Adaptive(marking) => {
                let theta: Vec<f64> = estimates.iter().map(LocalEstimate::theta).collect();
                let marked: Vec<usize> = marking
                    .mark(&theta)?
                    .into_iter()
                    .map(|i| estimates[i].cell)
                    .collect();
                disc.mesh.refine(&marked)?
            }
        };
        let (_, _, before) = unit_deviation(&disc, &values);
        let fine = Discretization::new(
            fine_mesh,
            problem.layout(),
            problem.boundary.as_ref(),
            tables.clone(),
        )
        .map_err(|e| e.at_level(level + 1))?;
        values = transfer_solution(
            &disc.mesh,
            &disc.dofs,
            &values,
            &fine.mesh,
            &fine.dofs,
            &fine.constraints,
        )?;
        disc = fine;
        let (_, _, after) = unit_deviation(&disc, &values);
        transfer_defects = (Some(before), Some(after));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn damping_schedule() {
        let c = NewtonConfig::default();
        let expect = [0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0];
        for (l, &a) in expect.iter().enumerate() {
            assert!((c.alpha(l) - a).abs() < 1e-15);
        }
    }

    fn flexo_disc(problem: &Problem) -> Discretization {
        let mesh = Mesh::uniform(8, 8, problem.domain).unwrap();
        let tables = Arc::new(BasisTables::new(3).unwrap());
        Discretization::new(mesh, problem.layout(), problem.boundary.as_ref(), tables).unwrap()
    }

    fn flexo_problem(initial: InitialGuess) -> Problem {
        Problem {
            params: MaterialParams::flexo_5cb(Formulation::Penalty, 1e5),
            boundary: Arc::new(crate::bench::FlexoBoundary::default()),
            exact: None,
            initial,
            domain: BBox::UNIT,
        }
    }

    #[test]
    fn field_aligned_start_is_unit_and_tilted() {
        let problem = flexo_problem(InitialGuess::FieldAligned { kappa: 0.1 });
        let disc = flexo_disc(&problem);
        let v = initial_values(&problem, &disc).unwrap();
        let off = [Field::N1, Field::N2, Field::N3].map(|f| disc.dofs.offset(f).unwrap());
        let mut max_tilt = 0.0f64;
        for i in 0..disc.dofs.n_q2_nodes() {
            let n = off.map(|o| v[o + i]);
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
            let p = disc.dofs.node_point(2, i);
            if p[0] <= 0.0 || p[0] >= 1.0 || p[1] <= 0.0 || p[1] >= 1.0 {
                assert_eq!(n, [0.0, 0.0, 1.0]);
            } else {
                max_tilt = max_tilt.max(n[0].hypot(n[1]));
            }
        }
        assert!(max_tilt > 0.9, "{max_tilt}");
    }

    #[test]
    fn field_aligned_needs_a_potential() {
        let mut problem = flexo_problem(InitialGuess::FieldAligned { kappa: 0.1 });
        problem.params = MaterialParams::elastic(Formulation::Penalty, 1e5);
        let disc = flexo_disc(&problem);
        assert!(matches!(
            initial_values(&problem, &disc),
            Err(Error::InitialGuess(_))
        ));
    }
}
