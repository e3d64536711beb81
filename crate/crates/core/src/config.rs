//! Run configuration: a flat TOML document with a few sections.
//!
//! ```toml
//! problem = "elastic_benchmark"   # or "flexo"
//! formulation = "penalty"         # or "lagrangian"
//! refinement = "amr"              # or "uniform"
//!
//! [marking]
//! strategy = "dorfler"
//! nu = 0.9
//!
//! [mesh]
//! nx = 32
//! ny = 32
//! levels = 4
//!
//! [material]
//! zeta = 1e8
//! ```
//!
//! Errors carry the 1-based line of the offending key (0 when a key is missing).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use toml::Spanned;

use crate::adapt::{MarkingConfig, Strategy};
use crate::bench::{FlexoBoundary, HarmonicMap};
use crate::error::{Error, Result};
use crate::mesh::BBox;
use crate::physics::{Formulation, MaterialParams};
use crate::solver::{InitialGuess, NestedConfig, NewtonConfig, Problem, Refinement};

/// Out-of-plane weight of the field-aligned initial director.
pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    ElasticBenchmark,
    Flexo,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::ElasticBenchmark => "elastic_benchmark",
            ProblemKind::Flexo => "flexo",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub params: MaterialParams,
    pub refinement: Refinement,
    pub grid: (usize, usize),
    /// Number of nested-iteration levels including the coarse one.
    pub levels: usize,
    pub dof_budget: Option<usize>,
    pub newton: NewtonConfig,
    pub quadrature: usize,
    pub initial: InitialGuess,
    pub continue_on_failure: bool,
    pub flexo_boundary: FlexoBoundary,
    pub out_dir: PathBuf,
    pub emit_vtk: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    problem: Option<Spanned<String>>,
    formulation: Option<Spanned<String>>,
    refinement: Option<Spanned<String>>,
    marking: Option<RawMarking>,
    mesh: Option<RawMesh>,
    material: Option<RawMaterial>,
    solver: Option<RawSolver>,
    boundary: Option<RawBoundary>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarking {
    strategy: Option<Spanned<String>>,
    nu: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nx: Option<Spanned<i64>>,
    ny: Option<Spanned<i64>>,
    levels: Option<Spanned<i64>>,
    dof_budget: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    k1: Option<Spanned<f64>>,
    k2: Option<Spanned<f64>>,
    k3: Option<Spanned<f64>>,
    eps0: Option<Spanned<f64>>,
    eps_perp: Option<Spanned<f64>>,
    eps_a: Option<Spanned<f64>>,
    e_s: Option<Spanned<f64>>,
    e_b: Option<Spanned<f64>>,
    zeta: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<Spanned<f64>>,
    max_iters: Option<Spanned<i64>>,
    alpha0: Option<Spanned<f64>>,
    alpha_step: Option<Spanned<f64>>,
    alpha_max: Option<Spanned<f64>>,
    quadrature: Option<Spanned<i64>>,
    initial: Option<Spanned<String>>,
    initial_director: Option<Spanned<Vec<f64>>>,
    kappa: Option<Spanned<f64>>,
    continue_on_failure: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    amplitude: Option<Spanned<f64>>,
    sharpness: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    emit_vtk: Option<bool>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, offset: usize) -> usize {
        self.0[..offset.min(self.0.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, v: &Spanned<T>, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.of(v.span().start),
            message: message.into(),
        }
    }
}

fn missing(key: &str) -> Error {
    Error::Config {
        line: 0,
        message: format!("missing required key '{key}'"),
    }
}

fn positive_count(lines: &Lines, v: &Spanned<i64>, key: &str) -> Result<usize> {
    match usize::try_from(*v.get_ref()) {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(lines.err(v, format!("{key} must be a positive integer"))),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines = Lines(text);
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| lines.of(s.start)),
            message: e.message().trim().to_string(),
        })?;

        let problem_key = raw.problem.as_ref().ok_or_else(|| missing("problem"))?;
        let problem = match problem_key.get_ref().as_str() {
            "elastic_benchmark" => ProblemKind::ElasticBenchmark,
            "flexo" => ProblemKind::Flexo,
            other => {
                return Err(lines.err(
                    problem_key,
                    format!("problem: unknown value '{other}' (elastic_benchmark, flexo)"),
                ))
            }
        };
        let form_key = raw
            .formulation
            .as_ref()
            .ok_or_else(|| missing("formulation"))?;
        let formulation = match form_key.get_ref().as_str() {
            "penalty" => Formulation::Penalty,
            "lagrangian" => Formulation::Lagrangian,
            other => {
                return Err(lines.err(
                    form_key,
                    format!("formulation: unknown value '{other}' (penalty, lagrangian)"),
                ))
            }
        };
        let ref_key = raw
            .refinement
            .as_ref()
            .ok_or_else(|| missing("refinement"))?;
        let adaptive = match ref_key.get_ref().as_str() {
            "uniform" => false,
            "amr" => true,
            other => {
                return Err(lines.err(
                    ref_key,
                    format!("refinement: unknown value '{other}' (uniform, amr)"),
                ))
            }
        };

        let refinement = match (&raw.marking, adaptive) {
            (Some(m), false) => {
                let any = m
                    .strategy
                    .as_ref()
                    .map(|s| s.span())
                    .or(m.nu.as_ref().map(|s| s.span()));
                return Err(Error::Config {
                    line: any.map_or(0, |s| lines.of(s.start)),
                    message: "marking settings require refinement = \"amr\"".into(),
                });
            }
            (None, false) => Refinement::Uniform,
            (None, true) => return Err(missing("marking.nu")),
            (Some(m), true) => {
                let nu = m.nu.as_ref().ok_or_else(|| missing("marking.nu"))?;
                let strategy = match &m.strategy {
                    Some(s) => s
                        .get_ref()
                        .parse::<Strategy>()
                        .map_err(|e| lines.err(s, format!("marking.strategy: {e}")))?,
                    None => Strategy::Dorfler,
                };
                let marking = MarkingConfig::new(strategy, *nu.get_ref())
                    .map_err(|e| lines.err(nu, format!("marking.nu: {e}")))?;
                Refinement::Adaptive(marking)
            }
        };

        let mesh = raw.mesh.as_ref().ok_or_else(|| missing("mesh.nx"))?;
        let nx = positive_count(
            &lines,
            mesh.nx.as_ref().ok_or_else(|| missing("mesh.nx"))?,
            "mesh.nx",
        )?;
        let ny = positive_count(
            &lines,
            mesh.ny.as_ref().ok_or_else(|| missing("mesh.ny"))?,
            "mesh.ny",
        )?;
        let levels = match &mesh.levels {
            Some(v) => positive_count(&lines, v, "mesh.levels")?,
            None => 3,
        };
        let dof_budget = match &mesh.dof_budget {
            Some(v) => Some(positive_count(&lines, v, "mesh.dof_budget")?),
            None => None,
        };

        let mut params = match problem {
            ProblemKind::ElasticBenchmark => MaterialParams::elastic(formulation, 0.0),
            ProblemKind::Flexo => MaterialParams::flexo_5cb(formulation, 0.0),
        };
        let empty = RawMaterial {
            k1: None,
            k2: None,
            k3: None,
            eps0: None,
            eps_perp: None,
            eps_a: None,
            e_s: None,
            e_b: None,
            zeta: None,
        };
        let mat = raw.material.as_ref().unwrap_or(&empty);
        for (slot, v, key) in [
            (&mut params.k1, &mat.k1, "k1"),
            (&mut params.k2, &mat.k2, "k2"),
            (&mut params.k3, &mat.k3, "k3"),
        ] {
            if let Some(v) = v {
                if !(*v.get_ref() > 0.0) {
                    return Err(lines.err(v, format!("material.{key} must be positive")));
                }
                *slot = *v.get_ref();
            }
        }
        for (slot, v, key) in [
            (&mut params.eps0, &mat.eps0, "eps0"),
            (&mut params.eps_perp, &mat.eps_perp, "eps_perp"),
            (&mut params.eps_a, &mat.eps_a, "eps_a"),
            (&mut params.e_s, &mat.e_s, "e_s"),
            (&mut params.e_b, &mat.e_b, "e_b"),
        ] {
            if let Some(v) = v {
                if !params.electric {
                    return Err(lines.err(
                        v,
                        format!("material.{key} needs the electric field (problem = \"flexo\")"),
                    ));
                }
                *slot = *v.get_ref();
            }
        }
        match (formulation, &mat.zeta) {
            (Formulation::Penalty, None) => return Err(missing("material.zeta")),
            (Formulation::Penalty, Some(z)) => {
                if !(*z.get_ref() > 0.0) {
                    return Err(lines.err(z, "material.zeta must be positive"));
                }
                params.zeta = *z.get_ref();
            }
            (Formulation::Lagrangian, Some(z)) => {
                return Err(lines.err(z, "material.zeta is only used by the penalty formulation"));
            }
            (Formulation::Lagrangian, None) => {}
        }

        let mut newton = NewtonConfig::default();
        let mut quadrature = 5;
        let mut initial = match problem {
            ProblemKind::ElasticBenchmark => InitialGuess::AngleLift,
            ProblemKind::Flexo => InitialGuess::FieldAligned {
                kappa: DEFAULT_KAPPA,
            },
        };
        let mut continue_on_failure = false;
        if let Some(s) = &raw.solver {
            if let Some(v) = &s.tol {
                if !(*v.get_ref() > 0.0) {
                    return Err(lines.err(v, "solver.tol must be positive"));
                }
                newton.tol = *v.get_ref();
            }
            if let Some(v) = &s.max_iters {
                newton.max_iters = positive_count(&lines, v, "solver.max_iters")?;
            }
            for (slot, v, key) in [
                (&mut newton.alpha0, &s.alpha0, "alpha0"),
                (&mut newton.alpha_step, &s.alpha_step, "alpha_step"),
                (&mut newton.alpha_max, &s.alpha_max, "alpha_max"),
            ] {
                if let Some(v) = v {
                    let a = *v.get_ref();
                    if !(a >= 0.0 && a <= 1.0) || (key != "alpha_step" && a == 0.0) {
                        return Err(lines.err(v, format!("solver.{key} must lie in (0, 1]")));
                    }
                    *slot = a;
                }
            }
            if let Some(v) = &s.quadrature {
                let q = positive_count(&lines, v, "solver.quadrature")?;
                if q > 6 {
                    return Err(lines.err(v, "solver.quadrature must lie in 1..=6"));
                }
                quadrature = q;
            }
            if let Some(v) = &s.initial {
                initial = match v.get_ref().as_str() {
                    "uniform" => InitialGuess::default(),
                    "angle_lift" => InitialGuess::AngleLift,
                    "field_aligned" => InitialGuess::FieldAligned { kappa: DEFAULT_KAPPA },
                    other => {
                        return Err(lines.err(
                            v,
                            format!("solver.initial: unknown value '{other}' (uniform, angle_lift, field_aligned)"),
                        ))
                    }
                };
            }
            if let Some(v) = &s.initial_director {
                let d = v.get_ref();
                if d.len() != 3 || d.iter().all(|x| *x == 0.0) {
                    return Err(lines.err(v, "solver.initial_director must be a non-zero 3-vector"));
                }
                if !matches!(initial, InitialGuess::Uniform(_)) && s.initial.is_some() {
                    return Err(lines.err(
                        v,
                        "solver.initial_director needs solver.initial = \"uniform\"",
                    ));
                }
                initial = InitialGuess::Uniform([d[0], d[1], d[2]]);
            }
            if let Some(v) = &s.kappa {
                let k = *v.get_ref();
                if !(k > 0.0 && k.is_finite()) {
                    return Err(lines.err(v, "solver.kappa must be positive"));
                }
                match &mut initial {
                    InitialGuess::FieldAligned { kappa } => *kappa = k,
                    _ => {
                        return Err(
                            lines.err(v, "solver.kappa needs solver.initial = \"field_aligned\"")
                        )
                    }
                }
            }
            continue_on_failure = s.continue_on_failure.unwrap_or(false);
        }

        let mut flexo_boundary = FlexoBoundary::default();
        if let Some(b) = &raw.boundary {
            if problem != ProblemKind::Flexo {
                let any = b
                    .amplitude
                    .as_ref()
                    .map(|s| s.span())
                    .or(b.sharpness.as_ref().map(|s| s.span()));
                return Err(Error::Config {
                    line: any.map_or(0, |s| lines.of(s.start)),
                    message: "boundary settings apply to problem = \"flexo\" only".into(),
                });
            }
            if let Some(v) = &b.amplitude {
                flexo_boundary.amplitude = *v.get_ref();
            }
            if let Some(v) = &b.sharpness {
                if !(*v.get_ref() > 0.0) {
                    return Err(lines.err(v, "boundary.sharpness must be positive"));
                }
                flexo_boundary.sharpness = *v.get_ref();
            }
        }

        let (out_dir, emit_vtk) = match &raw.output {
            Some(o) => (
                PathBuf::from(o.dir.clone().unwrap_or_else(|| "out".into())),
                o.emit_vtk.unwrap_or(false),
            ),
            None => (PathBuf::from("out"), false),
        };

        Ok(RunConfig {
            problem,
            params,
            refinement,
            grid: (nx, ny),
            levels,
            dof_budget,
            newton,
            quadrature,
            initial,
            continue_on_failure,
            flexo_boundary,
            out_dir,
            emit_vtk,
        })
    }

    pub fn build_problem(&self) -> Problem {
        match self.problem {
            ProblemKind::ElasticBenchmark => {
                let hm = Arc::new(HarmonicMap::default());
                Problem {
                    params: self.params.clone(),
                    boundary: hm.clone(),
                    exact: Some(hm),
                    initial: self.initial,
                    domain: BBox::UNIT,
                }
            }
            ProblemKind::Flexo => Problem {
                params: self.params.clone(),
                boundary: Arc::new(self.flexo_boundary),
                exact: None,
                initial: self.initial,
                domain: BBox::UNIT,
            },
        }
    }

    pub fn nested(&self) -> NestedConfig {
        NestedConfig {
            coarse: self.grid,
            refinement: self.refinement,
            max_levels: self.levels,
            dof_budget: self.dof_budget,
            newton: self.newton,
            quadrature: self.quadrature,
            continue_on_failure: self.continue_on_failure,
        }
    }
}
