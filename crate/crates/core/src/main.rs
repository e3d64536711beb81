use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use lcfem::adapt::{MarkingConfig, Strategy};
use lcfem::bench::distribution_curve;
use lcfem::config::RunConfig;
use lcfem::estimator::write_cells_csv;
use lcfem::solver::{nested_iteration, LevelRecord, Refinement, RunReport};
use lcfem::vtk::write_vtk;
use lcfem::Error;

/// Adaptive finite element runs for the coupled Frank-Oseen model.
#[derive(Parser, Debug)]
#[command(name = "lcfem", version)]
struct Cli {
    /// Run configuration (TOML).
    config: PathBuf,

    /// Output directory, overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Force uniform refinement.
    #[arg(long, conflicts_with = "amr")]
    uniform: bool,

    /// Force adaptive refinement; needs `--nu` unless the config has a `[marking]` section.
    #[arg(long)]
    amr: bool,

    /// Marking strategy used with `--amr`.
    #[arg(long, requires = "amr")]
    strategy: Option<Strategy>,

    /// Marking fraction used with `--amr`.
    #[arg(long, requires = "amr")]
    nu: Option<f64>,

    /// Number of levels, overrides `[mesh] levels`.
    #[arg(long)]
    levels: Option<usize>,

    /// Recorded in the summary; runs themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> Result<(), String> {
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(l) = cli.levels {
        if l == 0 {
            return Err("--levels must be positive".into());
        }
        cfg.levels = l;
    }
    if cli.uniform {
        cfg.refinement = Refinement::Uniform;
    }
    if cli.amr {
        let current = match cfg.refinement {
            Refinement::Adaptive(m) => Some(m),
            Refinement::Uniform => None,
        };
        let strategy = cli
            .strategy
            .or(current.map(|m| m.strategy))
            .unwrap_or(Strategy::Dorfler);
        let nu = cli
            .nu
            .or(current.map(|m| m.nu))
            .ok_or("--amr on a uniform config needs --nu")?;
        cfg.refinement = Refinement::Adaptive(MarkingConfig::new(strategy, nu)?);
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn write_report(path: &Path, levels: &[LevelRecord], reference: usize) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "level,cells,raw_dofs,free_dofs,alpha,newton_iterations,converged,residual,energy,augmented_energy,\
         estimate,h1_error,gauss,nnz,cumulative_nnz,cumulative_wu,max_dev_above,max_dev_below,\
         defect_before_transfer,defect_after_transfer,seconds"
    )?;
    for r in levels {
        writeln!(
            w,
            "{},{},{},{},{:.2},{},{},{:.6e},{:.12e},{:.12e},{:.12e},{},{},{},{},{:.10},{:.6e},{:.6e},{},{},{:.3}",
            r.level,
            r.cells,
            r.raw_dofs,
            r.free_dofs,
            r.alpha,
            r.newton_iterations,
            r.converged,
            r.residual,
            r.energy,
            r.augmented_energy,
            r.estimate,
            opt(r.h1_error),
            opt(r.gauss),
            r.nnz,
            r.cumulative_nnz,
            r.cumulative_nnz as f64 / reference as f64,
            r.max_deviation_above,
            r.max_deviation_below,
            opt(r.defect_before_transfer),
            opt(r.defect_after_transfer),
            r.seconds
        )?;
    }
    w.flush()
}

fn write_distribution(path: &Path, theta_sq: &[f64], err_sq: Option<&[f64]>) -> lcfem::Result<()> {
    let est = distribution_curve(theta_sq)?;
    let err = err_sq.map(distribution_curve).transpose()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "fraction_cells,estimator_fraction,error_fraction")?;
    for (k, (x, y)) in est.points.iter().enumerate() {
        let e = err
            .as_ref()
            .map(|c| format!("{:.10}", c.points[k].1))
            .unwrap_or_default();
        writeln!(w, "{x:.10},{y:.10},{e}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(
    path: &Path,
    cfg: &RunConfig,
    seed: u64,
    levels: &[LevelRecord],
    reference: usize,
    failure: Option<&str>,
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "problem: {}", cfg.problem.name())?;
    writeln!(w, "formulation: {:?}", cfg.params.formulation)?;
    match cfg.refinement {
        Refinement::Uniform => writeln!(w, "refinement: uniform")?,
        Refinement::Adaptive(m) => {
            writeln!(w, "refinement: amr ({}, nu = {})", m.strategy.name(), m.nu)?
        }
    }
    writeln!(w, "coarse grid: {}x{}", cfg.grid.0, cfg.grid.1)?;
    writeln!(w, "levels completed: {}", levels.len())?;
    writeln!(w, "seed: {seed}")?;
    if let Some(r) = levels.last() {
        writeln!(w, "final cells: {}", r.cells)?;
        writeln!(w, "final raw dofs: {}", r.raw_dofs)?;
        writeln!(w, "final energy: {:.10}", r.energy)?;
        writeln!(w, "final estimate: {:.6e}", r.estimate)?;
        if let Some(e) = r.h1_error {
            writeln!(w, "final h1 error: {e:.6e}")?;
        }
        if let Some(g) = r.gauss {
            writeln!(w, "final gauss conformance: {g:.6e}")?;
        }
        writeln!(
            w,
            "work units: {:.6} (reference nnz {reference})",
            r.cumulative_nnz as f64 / reference as f64
        )?;
    }
    writeln!(
        w,
        "status: {}",
        if failure.is_some() {
            "failed"
        } else {
            "converged"
        }
    )?;
    if let Some(f) = failure {
        writeln!(w, "failure: {f}")?;
    }
    w.flush()
}

fn write_failure(
    path: &Path,
    level: Option<usize>,
    kind: &str,
    message: &str,
) -> std::io::Result<()> {
    let mut w = std::fs::File::create(path)?;
    writeln!(w, "status=failed")?;
    writeln!(
        w,
        "level={}",
        level.map(|l| l.to_string()).unwrap_or_default()
    )?;
    writeln!(w, "kind={kind}")?;
    writeln!(w, "message={}", message.replace('\n', " "))
}

fn run(cfg: &RunConfig, seed: u64) -> lcfem::Result<bool> {
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let failure_path = out.join("failure.txt");
    if failure_path.exists() {
        std::fs::remove_file(&failure_path)?;
    }
    let problem = cfg.build_problem();
    let nested = cfg.nested();
    let mut records: Vec<LevelRecord> = Vec::new();

    let result = nested_iteration(&problem, &nested, &mut |snap| {
        let l = snap.record.level;
        eprintln!(
            "level {l}: {} cells, {} dofs, {} Newton steps, energy {:.8}, estimate {:.4e}",
            snap.record.cells,
            snap.record.raw_dofs,
            snap.record.newton_iterations,
            snap.record.energy,
            snap.record.estimate
        );
        records.push(snap.record.clone());
        write_cells_csv(
            &out.join(format!("estimator_cells_level{l}.csv")),
            snap.disc,
            snap.estimates,
        )?;
        let theta_sq: Vec<f64> = snap.estimates.iter().map(|e| e.theta_sq()).collect();
        write_distribution(
            &out.join(format!("distribution_level{l}.csv")),
            &theta_sq,
            snap.h1_cells,
        )?;
        if cfg.emit_vtk {
            write_vtk(
                &out.join(format!("fields_level{l}.vtk")),
                snap.disc,
                snap.values,
                snap.estimates,
                snap.h1_cells,
            )?;
        }
        Ok(())
    });

    let (report, error) = match result {
        Ok(r) => (r, None),
        Err(e) => (RunReport::default(), Some(e)),
    };
    let reference = records.last().map_or(1, |r| r.nnz.max(1));
    write_report(&out.join("report.csv"), &records, reference)?;
    if error.is_none() {
        report
            .ledger
            .write_csv(&out.join("work_ledger.csv"), reference)?;
    }
    let failure = match (&error, &report.failure) {
        (Some(e), _) => {
            let level = match e {
                Error::AtLevel { level, .. } => Some(*level),
                _ => None,
            };
            write_failure(&failure_path, level, "error", &e.to_string())?;
            Some(e.to_string())
        }
        (None, Some(msg)) => {
            write_failure(
                &failure_path,
                records.last().map(|r| r.level),
                "newton_not_converged",
                msg,
            )?;
            Some(msg.clone())
        }
        (None, None) => None,
    };
    write_summary(
        &out.join("summary.txt"),
        cfg,
        seed,
        &records,
        reference,
        failure.as_deref(),
    )?;
    if let Some(f) = &failure {
        eprintln!("run failed: {f}");
    }
    Ok(failure.is_none())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match RunConfig::from_file(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = apply_overrides(&cli, &mut cfg) {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    match run(&cfg, cli.seed) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
