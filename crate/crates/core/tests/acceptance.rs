//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Criteria 1 to 3 share one full-scale
//! replicated comparison on the separable toy system; its tables are kept
//! under the cargo target directory for inspection.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use pabf::check::run_checks;
use pabf::fieldio::{scalar_to_csv, vector_to_csv};
use pabf::grid::gradient;
use pabf::projection::project;
use pabf::report::{compare, write_comparison, Comparison, DEFAULT_FLATNESS_THRESHOLD};
use pabf::{RcGrid, RunSpec, ScalarField, VectorField};

/// Replicated runs of the comparison.
const RUNS: usize = 8;
/// Fraction of snapshots where the projected variance must not exceed the raw one.
const VARIANCE_FRACTION: f64 = 0.95;
/// Violations of the variance inequality are tolerated within this many standard errors.
const VARIANCE_SIGMAS: f64 = 2.0;
/// Normalized free-energy error PABF must reach by the end of the run.
const FINAL_ERROR: f64 = 0.1;
/// Allowed rise of the error above its running minimum, relative to that minimum.
const ERROR_FLUCTUATION: f64 = 0.2;
/// Fraction of snapshots where PABF's error must not exceed ABF's.
const ERROR_FRACTION: f64 = 0.8;
/// Required decrease of each marginal's flatness from first snapshot to run end.
const FLATNESS_DROP: f64 = 10.0;
/// Runs, out of `RUNS`, in which PABF must reach the flatness threshold first.
const FASTER_RUNS: usize = 6;
/// Agreement of the projection with exact discrete answers.
const ORACLE_TOL: f64 = 1e-8;
/// Minimum observed order of the projected potential under refinement.
const REFINEMENT_ORDER: f64 = 1.0;

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

impl Verdict {
    fn print(&self) {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {} ({}): {}",
            self.id, self.name, self.detail
        );
    }
}

fn toy_spec() -> RunSpec {
    // 64 replicas × 10 steps × 20000 sweeps: 2·10⁵ steps per replica, t = 100
    RunSpec {
        n1: 64,
        n2: 64,
        replicas: 64,
        dt: 5e-4,
        k_sub: 10,
        n_sweeps: 20_000,
        seed: 20_240_601,
        ..RunSpec::default()
    }
}

fn variance_reduction(cmp: &Comparison) -> Verdict {
    let stats = &cmp.pabf_stats;
    let mut below = 0;
    let mut beyond = Vec::new();
    let mut worst = 0.0f64;
    for s in stats {
        let excess = s.int_var_gradient - s.int_var_force;
        if excess <= 0.0 {
            below += 1;
            continue;
        }
        let se = s.int_var_force_se.hypot(s.int_var_gradient_se);
        worst = worst.max(excess / se);
        if excess > VARIANCE_SIGMAS * se {
            beyond.push(format!("t={:.3}", s.time));
        }
    }
    let frac = below as f64 / stats.len() as f64;
    // the same inequality for the variance of the Euclidean norm, shown for reference
    let norm_below = stats
        .iter()
        .filter(|s| s.int_norm_var_gradient <= s.int_norm_var_force)
        .count();
    let norm_beyond = stats
        .iter()
        .filter(|s| {
            let se = s.int_norm_var_force_se.hypot(s.int_norm_var_gradient_se);
            s.int_norm_var_gradient - s.int_norm_var_force > VARIANCE_SIGMAS * se
        })
        .count();
    Verdict {
        id: 1,
        name: "variance reduction",
        passed: frac >= VARIANCE_FRACTION && beyond.is_empty(),
        detail: format!(
            "Var(gradA) <= Var(F) at {below}/{} snapshots (need {:.0}%), largest excess {worst:.1} SE, \
             beyond {VARIANCE_SIGMAS} SE at [{}]; norm form E|.|^2-(E|.|)^2: {norm_below}/{} below, {norm_beyond} beyond {VARIANCE_SIGMAS} SE",
            stats.len(),
            100.0 * VARIANCE_FRACTION,
            beyond.join(" "),
            stats.len(),
        ),
    }
}

/// Index of the first snapshot at which the mean deposit count per bin has
/// reached the ramp threshold.
fn ramp_end(cmp: &Comparison, spec: &RunSpec) -> usize {
    let bins = (spec.n1 * spec.n2) as u64;
    cmp.pabf[0]
        .snapshots
        .iter()
        .position(|s| s.total_deposits >= spec.n_min * bins)
        .unwrap_or(cmp.pabf[0].snapshots.len())
}

fn error_decay(cmp: &Comparison, spec: &RunSpec) -> Verdict {
    let p: Vec<f64> = cmp.pabf_stats.iter().map(|s| s.l2_error).collect();
    let a: Vec<f64> = cmp.abf_stats.iter().map(|s| s.l2_error).collect();
    let last = *p.last().unwrap();
    let start = ramp_end(cmp, spec);
    let mut running = f64::INFINITY;
    let mut rises = Vec::new();
    for (s, &e) in cmp.pabf_stats[start..].iter().zip(&p[start..]) {
        if e > running * (1.0 + ERROR_FLUCTUATION) {
            rises.push(format!("t={:.3}", s.time));
        }
        running = running.min(e);
    }
    let at_or_below = p.iter().zip(&a).filter(|(x, y)| x <= y).count();
    let frac = at_or_below as f64 / p.len() as f64;
    Verdict {
        id: 2,
        name: "error decay",
        passed: last < FINAL_ERROR && rises.is_empty() && frac >= ERROR_FRACTION,
        detail: format!(
            "final PABF error {last:.2e} (< {FINAL_ERROR}), ABF {:.2e}; rises over {:.0}% after t={:.3}: [{}]; \
             PABF <= ABF at {at_or_below}/{} snapshots (need {:.0}%)",
            a.last().unwrap(),
            100.0 * ERROR_FLUCTUATION,
            cmp.pabf_stats.get(start).map_or(f64::NAN, |s| s.time),
            rises.join(" "),
            p.len(),
            100.0 * ERROR_FRACTION,
        ),
    }
}

fn flat_histogram(cmp: &Comparison) -> Verdict {
    let drop = |stats: &[pabf::report::SnapshotStats]| {
        let (first, last) = (&stats[0], stats.last().unwrap());
        (first.flatness.0 / last.flatness.0).min(first.flatness.1 / last.flatness.1)
    };
    let (dp, da) = (drop(&cmp.pabf_stats), drop(&cmp.abf_stats));
    let times = cmp.times_to_flatness();
    let faster = times
        .iter()
        .filter(|(p, a)| match (p, a) {
            (Some(p), Some(a)) => p < a,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    let fmt = |t: &Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.3}"));
    let pairs: Vec<String> = times
        .iter()
        .map(|(p, a)| format!("{}/{}", fmt(p), fmt(a)))
        .collect();
    Verdict {
        id: 3,
        name: "flat histogram",
        passed: dp >= FLATNESS_DROP && da >= FLATNESS_DROP && faster >= FASTER_RUNS,
        detail: format!(
            "flatness drop PABF {dp:.0}x, ABF {da:.0}x (need {FLATNESS_DROP}x); PABF first to {} in {faster}/{} runs \
             (need {FASTER_RUNS}), times PABF/ABF [{}]",
            cmp.flatness_threshold,
            times.len(),
            pairs.join(" "),
        ),
    }
}

fn projection_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let grid = RcGrid::new(48, 40, 1.0, 1.3).unwrap();
    let uniform = ScalarField::constant(grid, 1.0);
    let phi = ScalarField::from_fn(grid, |z1, z2| {
        (2.0 * PI * z1).sin() * (2.0 * PI * z2 / 1.3).cos() + 0.4 * (4.0 * PI * z1).cos()
    })
    .mean_zero();
    let g = gradient(&phi);
    let mut record = |name: &str, err: f64| {
        worst = worst.max(err);
        if err > ORACLE_TOL {
            failures.push(format!("{name} {err:.1e}"));
        }
    };

    // discrete gradient: recovered exactly, potential included
    let p = project(&g, &uniform, 1e-13, 100_000).unwrap();
    record(
        "gradient",
        g.max_abs_diff(&p.gradient)
            .max(phi.max_abs_diff(&p.potential)),
    );

    // constant field: harmonic, projects to zero
    let c = VectorField::constant(grid, (0.7, -1.9));
    let p = project(&c, &uniform, 1e-13, 100_000).unwrap();
    record(
        "constant",
        p.gradient
            .max_abs()
            .max(p.potential.max_abs_diff(&ScalarField::zeros(grid))),
    );

    // rotated gradient: divergence-free, projects to zero
    let rot = VectorField::new(
        grid,
        g.comp2().iter().map(|v| -v).collect(),
        g.comp1().to_vec(),
    )
    .unwrap();
    let p = project(&rot, &uniform, 1e-13, 100_000).unwrap();
    record("rotated gradient", p.gradient.max_abs());

    // sum of the three: only the gradient part survives
    let sum = g
        .axpby(1.0, &c, 1.0)
        .unwrap()
        .axpby(1.0, &rot, 1.0)
        .unwrap();
    let p = project(&sum, &uniform, 1e-13, 100_000).unwrap();
    record("gradient + constant + rotated", g.max_abs_diff(&p.gradient));

    // refinement with non-uniform smooth weight
    let a = |z1: f64, z2: f64| {
        (2.0 * PI * z1).sin() * (2.0 * PI * z2).cos() + 0.3 * (4.0 * PI * z2).sin()
    };
    let da = |z1: f64, z2: f64| {
        (
            2.0 * PI * (2.0 * PI * z1).cos() * (2.0 * PI * z2).cos(),
            -2.0 * PI * (2.0 * PI * z1).sin() * (2.0 * PI * z2).sin()
                + 1.2 * PI * (4.0 * PI * z2).cos(),
        )
    };
    let psi = |z1: f64, z2: f64| 1.0 + 0.5 * (2.0 * PI * z1).cos() * (2.0 * PI * z2).sin();
    let errs: Vec<f64> = [32, 64, 128]
        .into_iter()
        .map(|n| {
            let grid = RcGrid::unit(n, n).unwrap();
            let p = project(
                &VectorField::from_fn(grid, da),
                &ScalarField::from_fn(grid, psi),
                1e-12,
                100_000,
            )
            .unwrap();
            p.potential
                .max_abs_diff(&ScalarField::from_fn(grid, a).mean_zero())
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Verdict {
        id: 4,
        name: "projection oracle",
        passed: failures.is_empty() && order >= REFINEMENT_ORDER,
        detail: format!(
            "worst fixture error {worst:.1e} (bound {ORACLE_TOL:.0e}) [{}]; refinement errors {} orders {} (need >= {REFINEMENT_ORDER})",
            failures.join(", "),
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" "),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(" "),
        ),
    }
}

fn correctness_suite() -> Verdict {
    let results = run_checks(false);
    for r in &results {
        println!("    {r}");
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    Verdict {
        id: 5,
        name: "numerical correctness suite",
        passed: failed.is_empty(),
        detail: format!(
            "{}/{} checks pass [{}]",
            results.len() - failed.len(),
            results.len(),
            failed.join(", ")
        ),
    }
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// Run the command-line tool with `args`, `{out}` replaced by `out`; returns
/// the stdout and every file written under `out`.
fn execute(args: &[&str], out: &Path) -> (Vec<u8>, BTreeMap<PathBuf, Vec<u8>>) {
    let args: Vec<String> = args
        .iter()
        .map(|a| a.replace("{out}", out.to_str().unwrap()))
        .collect();
    let res = Command::new(env!("CARGO_BIN_EXE_pabf"))
        .args(&args)
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    let files = if out.exists() {
        read_tree(out)
    } else {
        BTreeMap::new()
    };
    (res.stdout, files)
}

fn determinism(scratch: &Path) -> Verdict {
    let inputs = scratch.join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    let cfg = inputs.join("small.cfg");
    std::fs::write(
        &cfg,
        "grid.n1 = 16\ngrid.n2 = 16\ndynamics.replicas = 6\ndynamics.k_sub = 5\ndynamics.dt = 1e-3\n\
         dynamics.n_sweeps = 60\nseed = 5\n",
    )
    .unwrap();
    let grid = RcGrid::unit(24, 20).unwrap();
    let f = VectorField::from_fn(grid, |z1, z2| {
        ((2.0 * PI * z1).sin() + z2, (2.0 * PI * z2).cos() * z1)
    });
    let psi = ScalarField::from_fn(grid, |z1, z2| 1.0 + 0.6 * (2.0 * PI * (z1 + z2)).sin());
    std::fs::write(inputs.join("F.csv"), vector_to_csv(&f)).unwrap();
    std::fs::write(inputs.join("psi.csv"), scalar_to_csv(&psi)).unwrap();

    let cfg = cfg.to_str().unwrap().to_string();
    let force = inputs.join("F.csv").to_str().unwrap().to_string();
    let density = inputs.join("psi.csv").to_str().unwrap().to_string();
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("run", vec!["run", "--config", &cfg, "--out", "{out}"]),
        (
            "run --seed",
            vec!["run", "--config", &cfg, "--seed", "99", "--out", "{out}"],
        ),
        (
            "compare",
            vec![
                "compare",
                "--config",
                &cfg,
                "--replicas",
                "3",
                "--out",
                "{out}",
            ],
        ),
        (
            "project-file",
            vec![
                "project-file",
                "--force",
                &force,
                "--density",
                &density,
                "--out",
                "{out}",
            ],
        ),
        ("check", vec!["check", "--quick"]),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (k, (name, args)) in cases.iter().enumerate() {
        // identical invocations, output directory included
        let out = scratch.join(format!("case{k}"));
        let a = execute(args, &out);
        let _ = std::fs::remove_dir_all(&out);
        let b = execute(args, &out);
        if *name != "check" && a.1.is_empty() {
            differing.push(format!("{name} wrote nothing"));
        }
        files += a.1.len();
        if a != b {
            differing.push(name.to_string());
        }
    }
    Verdict {
        id: 6,
        name: "determinism",
        passed: differing.is_empty(),
        detail: format!(
            "{} subcommands run twice, {files} output files compared byte for byte; differing [{}]",
            cases.len(),
            differing.join(", ")
        ),
    }
}

fn main() -> ExitCode {
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch).unwrap();

    let spec = toy_spec();
    let started = Instant::now();
    let cmp = compare(&spec, RUNS, DEFAULT_FLATNESS_THRESHOLD).expect("comparison runs");
    let elapsed = started.elapsed().as_secs_f64();
    let table = scratch.join("toy-compare");
    write_comparison(&table, &spec, &cmp).expect("comparison tables");
    println!(
        "toy comparison: {RUNS} runs per mode, {} snapshots, {elapsed:.0} s, tables in {}",
        cmp.pabf_stats.len(),
        table.display()
    );

    let verdicts = [
        variance_reduction(&cmp),
        error_decay(&cmp, &spec),
        flat_histogram(&cmp),
        projection_oracle(),
        correctness_suite(),
        determinism(&scratch),
    ];
    println!();
    for v in &verdicts {
        v.print();
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!(
        "\n{} of {} criteria pass",
        verdicts.len() - failed,
        verdicts.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
