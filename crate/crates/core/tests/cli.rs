use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "problem = \"flexo\"\nformulation = \"lagrangian\"\nrefinement = \"amr\"\n\n[marking]\nstrategy = \"bandwidth\"\nnu = 0.5\n\n[mesh]\nnx = 4\nny = 4\nlevels = 2\n\n[output]\ndir = \"{}\"\nemit_vtk = true\n{extra}",
        dir.join("out").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn lcfem(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lcfem"))
        .args(args)
        .output()
        .unwrap()
}

/// Every column except the trailing wall-time one.
fn without_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn run_writes_the_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = lcfem(&[cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("out");
    for f in [
        "report.csv",
        "work_ledger.csv",
        "summary.txt",
        "estimator_cells_level0.csv",
        "estimator_cells_level1.csv",
        "distribution_level0.csv",
        "distribution_level1.csv",
        "fields_level0.vtk",
        "fields_level1.vtk",
    ] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    assert!(!o.join("failure.txt").exists());
    let report = std::fs::read_to_string(o.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert!(report.starts_with("level,cells,raw_dofs,free_dofs,"));
    // 4x4 cells: four Q2 fields on 9x9 nodes plus Q1 multiplier on 5x5
    assert!(report.lines().nth(1).unwrap().starts_with("0,16,349,"));
    let vtk = std::fs::read_to_string(o.join("fields_level0.vtk")).unwrap();
    assert!(
        vtk.contains("CELL_TYPES 16")
            && vtk.contains("VECTORS n double")
            && vtk.contains("SCALARS theta double 1")
    );
    let summary = std::fs::read_to_string(o.join("summary.txt")).unwrap();
    assert!(summary.contains("status: converged"));
}

#[test]
fn reruns_are_identical_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        assert!(lcfem(&[cfg.to_str().unwrap()]).status.success());
        let report = std::fs::read_to_string(o.join("report.csv")).unwrap();
        let cells = std::fs::read_to_string(o.join("estimator_cells_level1.csv")).unwrap();
        let ledger = std::fs::read_to_string(o.join("work_ledger.csv")).unwrap();
        runs.push((without_timing(&report), cells, ledger));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn newton_failure_leaves_a_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[solver]\nmax_iters = 1\n");
    let out = lcfem(&[cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let o = dir.path().join("out");
    let failure = std::fs::read_to_string(o.join("failure.txt")).unwrap();
    assert!(
        failure.contains("status=failed")
            && failure.contains("level=0")
            && failure.contains("kind=newton_not_converged")
    );
    assert_eq!(
        std::fs::read_to_string(o.join("report.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    assert!(std::fs::read_to_string(o.join("summary.txt"))
        .unwrap()
        .contains("status: failed"));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let other = dir.path().join("elsewhere");
    let out = lcfem(&[
        cfg.to_str().unwrap(),
        "--uniform",
        "--levels",
        "1",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = std::fs::read_to_string(other.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    let summary = std::fs::read_to_string(other.join("summary.txt")).unwrap();
    assert!(summary.contains("refinement: uniform"));
}

#[test]
fn bad_config_exits_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("nu = 0.5", "nu = 1.2");
    std::fs::write(&cfg, text).unwrap();
    let out = lcfem(&[cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7") && err.contains("nu"), "{err}");
}
