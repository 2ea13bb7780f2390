//! End-to-end runs of the command-line tool.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::{Command, Output};

use pabf::fieldio::{read_scalar, read_vector, scalar_to_csv, vector_to_csv};
use pabf::{parse_config, RcGrid, ScalarField, VectorField};
use tempfile::TempDir;

const SMALL: &str = "grid.n1 = 16\ngrid.n2 = 16\ndynamics.replicas = 6\ndynamics.k_sub = 5\n\
                     dynamics.dt = 1e-3\ndynamics.n_sweeps = 40\nseed = 3\n";

fn pabf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pabf"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_its_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "small.cfg", SMALL);
    let out = tmp.path().join("out");
    let stdout = ok(&pabf(&["run", "--config", &cfg, "--out", s(&out)]));
    assert!(stdout.contains("pabf run finished"));
    for f in [
        "timeseries.csv",
        "snapshots.csv",
        "flatness.csv",
        "bias_state.csv",
        "manifest.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    // 40 sweeps of 5e-3: snapshots at 0.025, 0.05, 0.1 and the end
    let index = std::fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(index.lines().count(), 1 + 4);
    let flat = std::fs::read_to_string(out.join("flatness.csv")).unwrap();
    assert_eq!(flat.lines().count(), 1 + 40);

    let force = read_vector(&out.join("snapshots/snap_003_F.csv")).unwrap();
    let pot = read_scalar(&out.join("snapshots/snap_003_A.csv")).unwrap();
    assert_eq!((force.grid().n1(), force.grid().n2()), (16, 16));
    assert!(pot.mean().abs() < 1e-12);

    // the manifest is itself a configuration reproducing the run
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let spec = parse_config(&manifest).unwrap();
    assert_eq!((spec.n1, spec.n_sweeps, spec.seed), (16, 40, 3));
}

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "small.cfg", SMALL);
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    ok(&pabf(&["run", "--config", &cfg, "--out", s(&dirs[0])]));
    ok(&pabf(&["run", "--config", &cfg, "--out", s(&dirs[1])]));
    ok(&pabf(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        s(&dirs[2]),
    ]));
    let read = |d: &Path| std::fs::read(d.join("bias_state.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn compare_writes_joint_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "small.cfg", SMALL);
    let out = tmp.path().join("cmp");
    ok(&pabf(&[
        "compare",
        "--config",
        &cfg,
        "--replicas",
        "3",
        "--out",
        s(&out),
    ]));
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    assert!(header.contains(&"pabf_int_var_gradA") && header.contains(&"abf_int_var_F"));
    assert_eq!(table.lines().count(), 1 + 4);
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3);
}

#[test]
fn compare_needs_two_replicas() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "small.cfg", SMALL);
    let out = pabf(&[
        "compare",
        "--config",
        &cfg,
        "--replicas",
        "1",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn project_file_of_constant_field_is_zero() {
    let tmp = TempDir::new().unwrap();
    let grid = RcGrid::unit(12, 10).unwrap();
    let f = write(
        tmp.path(),
        "F.csv",
        &vector_to_csv(&VectorField::constant(grid, (1.5, -0.5))),
    );
    // constants are orthogonal to gradients only under a uniform weight
    let d = write(
        tmp.path(),
        "psi.csv",
        &scalar_to_csv(&ScalarField::constant(grid, 2.0)),
    );
    let out = tmp.path().join("proj");
    ok(&pabf(&[
        "project-file",
        "--force",
        &f,
        "--density",
        &d,
        "--out",
        s(&out),
    ]));
    let a = read_scalar(&out.join("A.csv")).unwrap();
    let g = read_vector(&out.join("gradA.csv")).unwrap();
    assert!(a.values().iter().all(|v| v.abs() < 1e-8));
    assert!(g.max_abs() < 1e-8);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("iterations = "));
}

#[test]
fn project_file_recovers_a_gradient() {
    let tmp = TempDir::new().unwrap();
    let grid = RcGrid::unit(20, 20).unwrap();
    let a = ScalarField::from_fn(grid, |z1, z2| (TAU * z1).sin() * z2.cos()).mean_zero();
    let g = pabf::grid::gradient(&a);
    let f = write(tmp.path(), "F.csv", &vector_to_csv(&g));
    let psi = ScalarField::from_fn(grid, |z1, z2| 1.0 + 0.5 * (6.0 * (z1 + z2)).sin());
    let d = write(tmp.path(), "psi.csv", &scalar_to_csv(&psi));
    let out = tmp.path().join("proj");
    ok(&pabf(&[
        "project-file",
        "--force",
        &f,
        "--density",
        &d,
        "--out",
        s(&out),
        "--tol",
        "1e-12",
    ]));
    let back = read_scalar(&out.join("A.csv")).unwrap();
    assert!(back.max_abs_diff(&a) < 1e-8);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "dynamics.dt = 0\n");
    let out = pabf(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dynamics.dt"), "{err}");

    let typo = write(tmp.path(), "typo.cfg", "grid.nn = 3\n");
    let err = String::from_utf8_lossy(&pabf(&["run", "--config", &typo]).stderr).into_owned();
    assert!(err.contains("grid.nn"), "{err}");

    let missing = pabf(&["run", "--config", s(&tmp.path().join("nope.cfg"))]);
    assert!(!missing.status.success());

    let f = write(tmp.path(), "F.csv", "i,j,z1,z2,v1,v2\n0,0,0,0,1\n");
    let d = write(tmp.path(), "psi.csv", "i,j,z1,z2,value\n0,0,0,0,1\n");
    let out = pabf(&[
        "project-file",
        "--force",
        &f,
        "--density",
        &d,
        "--out",
        s(&tmp.path().join("p")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("F.csv") && err.contains("line 2"), "{err}");
}

#[test]
fn quick_check_passes() {
    let stdout = ok(&pabf(&["check", "--quick"]));
    assert_eq!(stdout.lines().count(), 8);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let spec = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
            spec.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
