//! Run configuration: a flat `key = value` text format with dotted section
//! keys. Blank lines and `#` comments are ignored; every key is optional and
//! unknown keys are rejected.
//!
//! | key | default |
//! |-----|---------|
//! | `mode` | `pabf` (`abf` or `pabf`) |
//! | `seed` | `1` |
//! | `system.kind` | `toy` (`toy` or `trimer`) |
//! | `system.N` | toy: 3, trimer: 100 |
//! | `system.dim` | toy: 1, trimer: 2 |
//! | `system.box_length` | toy: 1, trimer: 10 |
//! | `system.beta` | 4 |
//! | `system.toy.a`, `system.toy.b`, `system.toy.bath` | 1, 0.3, 1 |
//! | `system.lj.epsilon`, `.sigma`, `.cutoff`, `.clamp` | 1, 1, 2.5, 0.8 |
//! | `system.bond.depth`, `.r0`, `.width` | 5, 2^(1/6), 0.5 |
//! | `system.angle.k`, `.theta0` | 2, π |
//! | `system.xi.delta` | 0.1 |
//! | `system.trimer` | `0,1,2` |
//! | `grid.n1`, `grid.n2` | 64, 64 |
//! | `dynamics.dt` | 5e-4 |
//! | `dynamics.n_sweeps` | 2000 |
//! | `dynamics.k_sub` | 10 |
//! | `dynamics.replicas` | 64 |
//! | `estimator.n_min` | 50 |
//! | `estimator.eps_density` | 1e-3 |
//! | `solver.tol` | 1e-8 |
//! | `solver.max_iter` | 0 (means 10·n1·n2) |
//! | `snapshots.first`, `snapshots.factor` | 0.025, 2 (geometric schedule) |
//! | `snapshots.times` | unset; comma-separated list overriding the geometric schedule |
//! | `output.dir` | `pabf-out` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::{DEFAULT_EPS_DENSITY, DEFAULT_N_MIN};
use crate::grid::RcGrid;
use crate::projection::{default_max_iter, DEFAULT_TOL};
use crate::systems::SystemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Abf,
    Pabf,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Abf => "abf",
            Mode::Pabf => "pabf",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "abf" => Ok(Mode::Abf),
            "pabf" => Ok(Mode::Pabf),
            _ => Err(format!("expected `abf` or `pabf`, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotSchedule {
    /// `first · factor^j` below the run end, then the run end.
    Geometric { first: f64, factor: f64 },
    /// Explicit times below the run end, then the run end.
    Times(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub system: SystemSpec,
    pub n1: usize,
    pub n2: usize,
    pub dt: f64,
    pub n_sweeps: usize,
    pub k_sub: usize,
    pub replicas: usize,
    pub n_min: u64,
    pub eps_density: f64,
    pub tol: f64,
    /// Zero selects the default cap.
    pub max_iter: usize,
    pub mode: Mode,
    pub seed: u64,
    pub snapshots: SnapshotSchedule,
    pub output_dir: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            system: SystemSpec::toy(),
            n1: 64,
            n2: 64,
            dt: 5e-4,
            n_sweeps: 2000,
            k_sub: 10,
            replicas: 64,
            n_min: DEFAULT_N_MIN,
            eps_density: DEFAULT_EPS_DENSITY,
            tol: DEFAULT_TOL,
            max_iter: 0,
            mode: Mode::Pabf,
            seed: 1,
            snapshots: SnapshotSchedule::Geometric {
                first: 0.025,
                factor: 2.0,
            },
            output_dir: PathBuf::from("pabf-out"),
        }
    }
}

impl RunSpec {
    pub fn grid(&self) -> Result<RcGrid> {
        RcGrid::unit(self.n1, self.n2)
    }

    pub fn solver_max_iter(&self) -> usize {
        if self.max_iter == 0 {
            self.grid().map(|g| default_max_iter(&g)).unwrap_or(1)
        } else {
            self.max_iter
        }
    }

    /// Simulated time covered by one sweep.
    pub fn sweep_time(&self) -> f64 {
        self.k_sub as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.n_sweeps as f64 * self.sweep_time()
    }

    /// Sweep boundaries at which snapshots are recorded: the first boundary
    /// at or after each requested time, never before sweep 1, always
    /// including the run end. Strictly increasing; empty for a zero-sweep run.
    pub fn snapshot_sweeps(&self) -> Vec<usize> {
        if self.n_sweeps == 0 {
            return Vec::new();
        }
        let end = self.end_time();
        let requested: Vec<f64> = match &self.snapshots {
            SnapshotSchedule::Geometric { first, factor } => {
                let mut v = Vec::new();
                let mut t = *first;
                while t < end {
                    v.push(t);
                    t *= factor;
                }
                v
            }
            SnapshotSchedule::Times(ts) => ts.iter().copied().filter(|&t| t < end).collect(),
        };
        let per = self.sweep_time();
        let mut sweeps: Vec<usize> = requested
            .iter()
            .map(|t| ((t / per - 1e-9).ceil().max(1.0) as usize).min(self.n_sweeps))
            .collect();
        sweeps.push(self.n_sweeps);
        sweeps.sort_unstable();
        sweeps.dedup();
        sweeps
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, message: String| {
            Err(Error::Config {
                line: 0,
                key: key.into(),
                message,
            })
        };
        if let Err((key, message)) = self.system.check() {
            return fail(key, message);
        }
        if self.n1 < RcGrid::MIN_NODES {
            return fail("grid.n1", format!("must be at least {}", RcGrid::MIN_NODES));
        }
        if self.n2 < RcGrid::MIN_NODES {
            return fail("grid.n2", format!("must be at least {}", RcGrid::MIN_NODES));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail("dynamics.dt", format!("must be positive, got {}", self.dt));
        }
        if self.k_sub == 0 {
            return fail("dynamics.k_sub", "must be at least 1".into());
        }
        if self.replicas == 0 {
            return fail("dynamics.replicas", "must be at least 1".into());
        }
        if self.n_min == 0 {
            return fail("estimator.n_min", "must be at least 1".into());
        }
        if !(self.eps_density.is_finite() && self.eps_density > 0.0) {
            return fail(
                "estimator.eps_density",
                format!("must be positive, got {}", self.eps_density),
            );
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return fail(
                "solver.tol",
                format!("must lie in (0, 1), got {}", self.tol),
            );
        }
        match &self.snapshots {
            SnapshotSchedule::Geometric { first, factor } => {
                if !(first.is_finite() && *first > 0.0) {
                    return fail("snapshots.first", format!("must be positive, got {first}"));
                }
                if !(factor.is_finite() && *factor > 1.0) {
                    return fail("snapshots.factor", format!("must exceed 1, got {factor}"));
                }
            }
            SnapshotSchedule::Times(ts) => {
                if ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return fail("snapshots.times", "times must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Serialize every setting; [`parse_config`] restores an identical spec.
    pub fn to_config_string(&self) -> String {
        let s = &self.system;
        let t = &s.trimer;
        let y = &s.toy;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("mode", self.mode.name().into());
        kv("seed", self.seed.to_string());
        kv("system.kind", s.kind.name().into());
        kv("system.N", s.n_particles.to_string());
        kv("system.dim", s.dim.to_string());
        kv("system.box_length", fmt_f(s.box_length));
        kv("system.beta", fmt_f(s.beta));
        kv("system.toy.a", fmt_f(y.well_a));
        kv("system.toy.b", fmt_f(y.well_b));
        kv("system.toy.bath", fmt_f(y.bath));
        kv("system.lj.epsilon", fmt_f(t.epsilon));
        kv("system.lj.sigma", fmt_f(t.sigma));
        kv("system.lj.cutoff", fmt_f(t.cutoff));
        kv("system.lj.clamp", fmt_f(t.clamp));
        kv("system.bond.depth", fmt_f(t.bond_depth));
        kv("system.bond.r0", fmt_f(t.bond_r0));
        kv("system.bond.width", fmt_f(t.bond_width));
        kv("system.angle.k", fmt_f(t.angle_k));
        kv("system.angle.theta0", fmt_f(t.angle_theta0));
        kv("system.xi.delta", fmt_f(t.xi_delta));
        kv(
            "system.trimer",
            format!("{},{},{}", t.indices[0], t.indices[1], t.indices[2]),
        );
        kv("grid.n1", self.n1.to_string());
        kv("grid.n2", self.n2.to_string());
        kv("dynamics.dt", fmt_f(self.dt));
        kv("dynamics.n_sweeps", self.n_sweeps.to_string());
        kv("dynamics.k_sub", self.k_sub.to_string());
        kv("dynamics.replicas", self.replicas.to_string());
        kv("estimator.n_min", self.n_min.to_string());
        kv("estimator.eps_density", fmt_f(self.eps_density));
        kv("solver.tol", fmt_f(self.tol));
        kv("solver.max_iter", self.max_iter.to_string());
        match &self.snapshots {
            SnapshotSchedule::Geometric { first, factor } => {
                kv("snapshots.first", fmt_f(*first));
                kv("snapshots.factor", fmt_f(*factor));
            }
            SnapshotSchedule::Times(ts) => {
                kv(
                    "snapshots.times",
                    ts.iter().map(|t| fmt_f(*t)).collect::<Vec<_>>().join(","),
                );
            }
        }
        kv("output.dir", self.output_dir.display().to_string());
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

const KEYS: &[&str] = &[
    "mode",
    "seed",
    "system.kind",
    "system.N",
    "system.dim",
    "system.box_length",
    "system.beta",
    "system.toy.a",
    "system.toy.b",
    "system.toy.bath",
    "system.lj.epsilon",
    "system.lj.sigma",
    "system.lj.cutoff",
    "system.lj.clamp",
    "system.bond.depth",
    "system.bond.r0",
    "system.bond.width",
    "system.angle.k",
    "system.angle.theta0",
    "system.xi.delta",
    "system.trimer",
    "grid.n1",
    "grid.n2",
    "dynamics.dt",
    "dynamics.n_sweeps",
    "dynamics.k_sub",
    "dynamics.replicas",
    "estimator.n_min",
    "estimator.eps_density",
    "solver.tol",
    "solver.max_iter",
    "snapshots.first",
    "snapshots.factor",
    "snapshots.times",
    "output.dir",
];

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &'static str) -> Result<Option<(usize, T)>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => {
                raw.parse::<T>()
                    .map(|v| Some((line, v)))
                    .map_err(|e| Error::Config {
                        line,
                        key: key.into(),
                        message: format!("cannot parse `{raw}`: {e}"),
                    })
            }
        }
    }

    fn set<T: FromStr>(&mut self, key: &'static str, slot: &mut T) -> Result<usize>
    where
        T::Err: std::fmt::Display,
    {
        match self.take::<T>(key)? {
            Some((line, v)) => {
                *slot = v;
                Ok(line)
            }
            None => Ok(0),
        }
    }
}

/// Parse and validate a run configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<RunSpec> {
    let mut entries = Entries {
        map: BTreeMap::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            key: content.into(),
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: "unknown key".into(),
            });
        };
        if value.is_empty() {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: "missing value".into(),
            });
        }
        if let Some((first, _)) = entries.map.insert(known, (line, value.to_string())) {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: format!("duplicate key (first set on line {first})"),
            });
        }
    }

    let mut spec = RunSpec::default();
    let mut lines: BTreeMap<&'static str, usize> = BTreeMap::new();

    if let Some((line, kind)) = entries.take::<String>("system.kind")? {
        spec.system = match kind.as_str() {
            "toy" | "toy-separable" => SystemSpec::toy(),
            "trimer" => SystemSpec::trimer(),
            other => {
                return Err(Error::Config {
                    line,
                    key: "system.kind".into(),
                    message: format!("expected `toy` or `trimer`, got `{other}`"),
                })
            }
        };
        lines.insert("system.kind", line);
    }

    macro_rules! set {
        ($key:literal, $slot:expr) => {
            let line = entries.set($key, &mut $slot)?;
            if line > 0 {
                lines.insert($key, line);
            }
        };
    }

    set!("mode", spec.mode);
    set!("seed", spec.seed);
    let sys = &mut spec.system;
    set!("system.N", sys.n_particles);
    set!("system.dim", sys.dim);
    set!("system.box_length", sys.box_length);
    set!("system.beta", sys.beta);
    set!("system.toy.a", sys.toy.well_a);
    set!("system.toy.b", sys.toy.well_b);
    set!("system.toy.bath", sys.toy.bath);
    set!("system.lj.epsilon", sys.trimer.epsilon);
    set!("system.lj.sigma", sys.trimer.sigma);
    set!("system.lj.cutoff", sys.trimer.cutoff);
    set!("system.lj.clamp", sys.trimer.clamp);
    set!("system.bond.depth", sys.trimer.bond_depth);
    set!("system.bond.r0", sys.trimer.bond_r0);
    set!("system.bond.width", sys.trimer.bond_width);
    set!("system.angle.k", sys.trimer.angle_k);
    set!("system.angle.theta0", sys.trimer.angle_theta0);
    set!("system.xi.delta", sys.trimer.xi_delta);
    if let Some((line, raw)) = entries.take::<String>("system.trimer")? {
        let idx: std::result::Result<Vec<usize>, _> =
            raw.split(',').map(|s| s.trim().parse::<usize>()).collect();
        match idx.as_deref() {
            Ok([a, b, c]) => sys.trimer.indices = [*a, *b, *c],
            _ => {
                return Err(Error::Config {
                    line,
                    key: "system.trimer".into(),
                    message: format!("expected three particle indices `a,b,c`, got `{raw}`"),
                })
            }
        }
        lines.insert("system.trimer", line);
    }
    set!("grid.n1", spec.n1);
    set!("grid.n2", spec.n2);
    set!("dynamics.dt", spec.dt);
    set!("dynamics.n_sweeps", spec.n_sweeps);
    set!("dynamics.k_sub", spec.k_sub);
    set!("dynamics.replicas", spec.replicas);
    set!("estimator.n_min", spec.n_min);
    set!("estimator.eps_density", spec.eps_density);
    set!("solver.tol", spec.tol);
    set!("solver.max_iter", spec.max_iter);

    let (mut first, mut factor) = (0.025, 2.0);
    set!("snapshots.first", first);
    set!("snapshots.factor", factor);
    spec.snapshots = SnapshotSchedule::Geometric { first, factor };
    if let Some((line, raw)) = entries.take::<String>("snapshots.times")? {
        if lines.contains_key("snapshots.first") || lines.contains_key("snapshots.factor") {
            return Err(Error::Config {
                line,
                key: "snapshots.times".into(),
                message: "cannot combine an explicit list with the geometric schedule".into(),
            });
        }
        let times: std::result::Result<Vec<f64>, _> =
            raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match times {
            Ok(mut ts) => {
                ts.sort_by(f64::total_cmp);
                spec.snapshots = SnapshotSchedule::Times(ts);
            }
            Err(e) => {
                return Err(Error::Config {
                    line,
                    key: "snapshots.times".into(),
                    message: format!("cannot parse `{raw}`: {e}"),
                })
            }
        }
        lines.insert("snapshots.times", line);
    }
    if let Some((_, dir)) = entries.take::<String>("output.dir")? {
        spec.output_dir = PathBuf::from(dir);
    }
    debug_assert!(entries.map.is_empty());

    match spec.validate() {
        Err(Error::Config { key, message, .. }) => {
            // point at the offending line when the key was given explicitly
            let line = lines
                .iter()
                .find(|(k, _)| **k == key)
                .map(|(_, l)| *l)
                .unwrap_or(0);
            Err(Error::Config { line, key, message })
        }
        other => other.map(|_| spec),
    }
}
