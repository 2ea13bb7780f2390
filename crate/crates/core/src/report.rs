//! Cross-run summaries and the on-disk layout of run and comparison outputs.
//!
//! A `run` directory holds `manifest.txt`, `timeseries.csv`, `flatness.csv`,
//! `snapshots.csv`, `bias_state.csv` and per-snapshot field dumps under
//! `snapshots/`. A `compare` directory holds `manifest.txt`,
//! `comparison.csv`, `timeseries_pabf.csv`, `timeseries_abf.csv` and
//! `runs.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{Mode, RunSpec};
use crate::diagnostics::{integrated_norm_variance_with_error, integrated_variance_with_error};
use crate::driver::{run_replicated, run_seed, RunOutput};
use crate::error::{Error, Result};
use crate::fieldio::{fmt17, marginals_to_csv, scalar_to_csv, vector_to_csv};
use crate::grid::VectorField;

pub const TIMESERIES_HEADER: &str =
    "t,int_var_F,int_var_gradA,l2_error,neg_log_flatness1,neg_log_flatness2";

/// Flatness both marginals must reach in the time-to-flatness statistic.
pub const DEFAULT_FLATNESS_THRESHOLD: f64 = 0.05;

/// Statistics across runs of one mode at one snapshot time.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotStats {
    pub time: f64,
    pub int_var_force: f64,
    pub int_var_force_se: f64,
    pub int_var_gradient: f64,
    pub int_var_gradient_se: f64,
    /// Cross-run variance of the Euclidean norm, `E|F|² − (E|F|)²`, integrated.
    pub int_norm_var_force: f64,
    pub int_norm_var_force_se: f64,
    pub int_norm_var_gradient: f64,
    pub int_norm_var_gradient_se: f64,
    /// Mean over runs; NaN without a reference free energy.
    pub l2_error: f64,
    /// Mean over runs of each marginal's flatness.
    pub flatness: (f64, f64),
    /// Mean over runs of `-ln` flatness.
    pub neg_log_flatness: (f64, f64),
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Per-snapshot statistics across replicated runs sharing one schedule.
pub fn summarize(runs: &[RunOutput]) -> Result<Vec<SnapshotStats>> {
    if runs.len() < 2 {
        return Err(Error::InsufficientReplication(runs.len()));
    }
    let n = runs[0].snapshots.len();
    if runs.iter().any(|r| r.snapshots.len() != n) {
        return Err(Error::Precondition(
            "runs have different snapshot schedules".into(),
        ));
    }
    (0..n)
        .map(|k| {
            let snaps: Vec<_> = runs.iter().map(|r| &r.snapshots[k]).collect();
            let forces: Vec<VectorField> = snaps.iter().map(|s| s.force.clone()).collect();
            let grads: Vec<VectorField> = snaps.iter().map(|s| s.gradient.clone()).collect();
            let (vf, vf_se) = integrated_variance_with_error(&forces)?;
            let (vg, vg_se) = integrated_variance_with_error(&grads)?;
            let (nf, nf_se) = integrated_norm_variance_with_error(&forces)?;
            let (ng, ng_se) = integrated_norm_variance_with_error(&grads)?;
            Ok(SnapshotStats {
                time: snaps[0].time,
                int_var_force: vf,
                int_var_force_se: vf_se,
                int_var_gradient: vg,
                int_var_gradient_se: vg_se,
                int_norm_var_force: nf,
                int_norm_var_force_se: nf_se,
                int_norm_var_gradient: ng,
                int_norm_var_gradient_se: ng_se,
                l2_error: mean(snaps.iter().map(|s| s.l2_error.unwrap_or(f64::NAN))),
                flatness: (
                    mean(snaps.iter().map(|s| s.flatness.0)),
                    mean(snaps.iter().map(|s| s.flatness.1)),
                ),
                neg_log_flatness: (
                    mean(snaps.iter().map(|s| -s.flatness.0.ln())),
                    mean(snaps.iter().map(|s| -s.flatness.1.ln())),
                ),
            })
        })
        .collect()
}

/// Both modes run with identical derived seeds, paired by run index.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub pabf: Vec<RunOutput>,
    pub abf: Vec<RunOutput>,
    pub pabf_stats: Vec<SnapshotStats>,
    pub abf_stats: Vec<SnapshotStats>,
    pub flatness_threshold: f64,
}

impl Comparison {
    /// `(pabf, abf)` time to flatness for each run index.
    pub fn times_to_flatness(&self) -> Vec<(Option<f64>, Option<f64>)> {
        self.pabf
            .iter()
            .zip(&self.abf)
            .map(|(p, a)| {
                (
                    p.time_to_flatness(self.flatness_threshold),
                    a.time_to_flatness(self.flatness_threshold),
                )
            })
            .collect()
    }
}

pub fn compare(spec: &RunSpec, replicas: usize, flatness_threshold: f64) -> Result<Comparison> {
    let with_mode = |mode| RunSpec {
        mode,
        ..spec.clone()
    };
    let pabf = run_replicated(&with_mode(Mode::Pabf), replicas)?;
    let abf = run_replicated(&with_mode(Mode::Abf), replicas)?;
    Ok(Comparison {
        pabf_stats: summarize(&pabf)?,
        abf_stats: summarize(&abf)?,
        pabf,
        abf,
        flatness_threshold,
    })
}

fn opt(v: Option<f64>) -> String {
    fmt17(v.unwrap_or(f64::NAN))
}

fn timeseries_row(s: &mut String, t: f64, var_f: f64, var_g: f64, l2: f64, nlf: (f64, f64)) {
    let _ = writeln!(
        s,
        "{},{},{},{},{},{}",
        fmt17(t),
        fmt17(var_f),
        fmt17(var_g),
        fmt17(l2),
        fmt17(nlf.0),
        fmt17(nlf.1)
    );
}

fn stats_timeseries(stats: &[SnapshotStats]) -> String {
    let mut s = format!("{TIMESERIES_HEADER}\n");
    for r in stats {
        timeseries_row(
            &mut s,
            r.time,
            r.int_var_force,
            r.int_var_gradient,
            r.l2_error,
            r.neg_log_flatness,
        );
    }
    s
}

/// Flat `key = value` manifest: the full configuration, then summary lines as comments.
fn manifest(spec: &RunSpec, summary: &[(String, String)]) -> String {
    let mut s = spec.to_config_string();
    for (k, v) in summary {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

/// Write a single run's outputs into `dir`.
pub fn write_run(dir: &Path, spec: &RunSpec, out: &RunOutput) -> Result<()> {
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;

    let mut ts = format!("{TIMESERIES_HEADER}\n");
    let mut index = String::from("index,sweep,t,total_deposits\n");
    for (k, s) in out.snapshots.iter().enumerate() {
        timeseries_row(
            &mut ts,
            s.time,
            f64::NAN,
            f64::NAN,
            s.l2_error.unwrap_or(f64::NAN),
            (-s.flatness.0.ln(), -s.flatness.1.ln()),
        );
        let _ = writeln!(
            index,
            "{k},{},{},{}",
            s.sweep,
            fmt17(s.time),
            s.total_deposits
        );
        let name = |what: &str| snap_dir.join(format!("snap_{k:03}_{what}.csv"));
        fs::write(name("F"), vector_to_csv(&s.force))?;
        fs::write(name("gradA"), vector_to_csv(&s.gradient))?;
        fs::write(name("A"), scalar_to_csv(&s.potential))?;
        fs::write(name("density"), scalar_to_csv(&s.density))?;
        fs::write(
            name("marginals"),
            marginals_to_csv(s.density.grid(), &s.marginals.0, &s.marginals.1),
        )?;
    }
    fs::write(dir.join("timeseries.csv"), ts)?;
    fs::write(dir.join("snapshots.csv"), index)?;

    let mut fl = String::from("t,flatness1,flatness2\n");
    for f in &out.flatness_trace {
        let _ = writeln!(
            fl,
            "{},{},{}",
            fmt17(f.time),
            fmt17(f.flatness1),
            fmt17(f.flatness2)
        );
    }
    fs::write(dir.join("flatness.csv"), fl)?;
    fs::write(dir.join("bias_state.csv"), out.state.to_csv())?;

    let mut summary = vec![
        ("snapshots".to_string(), out.snapshots.len().to_string()),
        (
            "total_deposits".to_string(),
            out.state.total_count().to_string(),
        ),
    ];
    if let Some(last) = out.snapshots.last() {
        summary.push(("final_time".into(), fmt17(last.time)));
        summary.push(("final_l2_error".into(), opt(last.l2_error)));
        summary.push(("final_flatness1".into(), fmt17(last.flatness.0)));
        summary.push(("final_flatness2".into(), fmt17(last.flatness.1)));
    }
    fs::write(dir.join("manifest.txt"), manifest(spec, &summary))?;
    Ok(())
}

const MODE_COLUMNS: [&str; 13] = [
    "int_var_F",
    "int_var_F_se",
    "int_var_gradA",
    "int_var_gradA_se",
    "int_normvar_F",
    "int_normvar_F_se",
    "int_normvar_gradA",
    "int_normvar_gradA_se",
    "l2_error",
    "flatness1",
    "flatness2",
    "neg_log_flatness1",
    "neg_log_flatness2",
];

fn mode_values(s: &SnapshotStats) -> [f64; 13] {
    [
        s.int_var_force,
        s.int_var_force_se,
        s.int_var_gradient,
        s.int_var_gradient_se,
        s.int_norm_var_force,
        s.int_norm_var_force_se,
        s.int_norm_var_gradient,
        s.int_norm_var_gradient_se,
        s.l2_error,
        s.flatness.0,
        s.flatness.1,
        s.neg_log_flatness.0,
        s.neg_log_flatness.1,
    ]
}

/// Joint per-snapshot table of both modes.
pub fn comparison_csv(cmp: &Comparison) -> String {
    let mut s = String::from("t");
    for mode in ["pabf", "abf"] {
        for c in MODE_COLUMNS {
            let _ = write!(s, ",{mode}_{c}");
        }
    }
    s.push('\n');
    for (p, a) in cmp.pabf_stats.iter().zip(&cmp.abf_stats) {
        s.push_str(&fmt17(p.time));
        for v in mode_values(p).into_iter().chain(mode_values(a)) {
            s.push(',');
            s.push_str(&fmt17(v));
        }
        s.push('\n');
    }
    s
}

/// Write a comparison's outputs into `dir`.
pub fn write_comparison(dir: &Path, spec: &RunSpec, cmp: &Comparison) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("comparison.csv"), comparison_csv(cmp))?;
    fs::write(
        dir.join("timeseries_pabf.csv"),
        stats_timeseries(&cmp.pabf_stats),
    )?;
    fs::write(
        dir.join("timeseries_abf.csv"),
        stats_timeseries(&cmp.abf_stats),
    )?;

    let mut runs =
        String::from("run,seed,pabf_time_to_flatness,abf_time_to_flatness,pabf_final_l2_error,abf_final_l2_error\n");
    let times = cmp.times_to_flatness();
    for (i, ((p, a), (tp, ta))) in cmp.pabf.iter().zip(&cmp.abf).zip(times).enumerate() {
        let last_l2 = |o: &RunOutput| o.snapshots.last().and_then(|s| s.l2_error);
        let _ = writeln!(
            runs,
            "{i},{},{},{},{},{}",
            run_seed(spec.seed, i),
            opt(tp),
            opt(ta),
            opt(last_l2(p)),
            opt(last_l2(a))
        );
    }
    fs::write(dir.join("runs.csv"), runs)?;

    let summary = vec![
        ("replicated_runs".to_string(), cmp.pabf.len().to_string()),
        (
            "flatness_threshold".to_string(),
            fmt17(cmp.flatness_threshold),
        ),
    ];
    let mut spec = spec.clone();
    spec.mode = Mode::Pabf;
    fs::write(dir.join("manifest.txt"), manifest(&spec, &summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SnapshotSchedule;
    use crate::driver::run;

    fn small() -> RunSpec {
        RunSpec {
            n1: 8,
            n2: 8,
            n_sweeps: 20,
            k_sub: 5,
            replicas: 4,
            dt: 1e-3,
            snapshots: SnapshotSchedule::Times(vec![0.05]),
            ..RunSpec::default()
        }
    }

    #[test]
    fn summaries_align_on_snapshot_times() {
        let cmp = compare(&small(), 3, 0.5).unwrap();
        assert_eq!(cmp.pabf_stats.len(), 2);
        assert_eq!(cmp.abf_stats.len(), 2);
        for (p, a) in cmp.pabf_stats.iter().zip(&cmp.abf_stats) {
            assert_eq!(p.time, a.time);
            assert!(p.int_var_force >= 0.0 && p.int_var_gradient >= 0.0);
        }
        let csv = comparison_csv(&cmp);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 27);
    }

    #[test]
    fn summarize_needs_two_runs() {
        let out = run(&small()).unwrap();
        assert!(matches!(
            summarize(&[out]),
            Err(Error::InsufficientReplication(1))
        ));
    }

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let out = run(&spec).unwrap();
        write_run(dir.path(), &spec, &out).unwrap();
        for f in [
            "manifest.txt",
            "timeseries.csv",
            "flatness.csv",
            "snapshots.csv",
            "bias_state.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let ts = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
        assert_eq!(ts.lines().next(), Some(TIMESERIES_HEADER));
        assert_eq!(ts.lines().count(), 3);
        assert!(dir.path().join("snapshots/snap_001_gradA.csv").is_file());
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert_eq!(crate::config::parse_config(&manifest).unwrap(), spec);
    }
}
