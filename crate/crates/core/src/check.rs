//! Built-in numerical self-checks behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, RunSpec, SnapshotSchedule};
use crate::driver::run;
use crate::error::Result;
use crate::grid::{divergence, gradient, RcGrid, ScalarField, VectorField};
use crate::integrator::sample_boltzmann_check;
use crate::projection::{project, DEFAULT_TOL};
use crate::systems::{Configuration, SystemSpec, ToyParams};

pub const FORCE_TOL: f64 = 1e-5;
pub const ADJOINT_TOL: f64 = 1e-10;
pub const MOMENT_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Observed statistic and the bound it was held to.
    pub value: f64,
    pub bound: f64,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {}: {:.3e} (bound {:.3e})",
            self.name, self.value, self.bound
        )
    }
}

fn result(name: impl Into<String>, value: f64, bound: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: value <= bound,
        value,
        bound,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest relative discrepancy between analytic forces and central
/// differences of the energy, over `n` random configurations.
pub fn force_fd_error(spec: &SystemSpec, n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let c = spec.random_configuration(&mut rng, 0.2);
        let f = spec.forces(&c)?;
        let mut fd = vec![0.0; f.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut p = c.positions.clone();
            p[k] += h;
            let ep = spec.energy(&Configuration {
                positions: p.clone(),
            })?;
            p[k] -= 2.0 * h;
            let em = spec.energy(&Configuration { positions: p })?;
            *slot = -(ep - em) / (2.0 * h);
        }
        let diff: Vec<f64> = f.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst = worst.max(max_abs(&diff) / max_abs(&f).max(1.0));
    }
    Ok(worst)
}

/// Largest discrepancy between reaction-coordinate jacobians and central
/// differences of the unclamped coordinate.
pub fn xi_jacobian_error(spec: &SystemSpec, n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let c = spec.random_configuration(&mut rng, 0.05);
        let xi = spec.xi(&c)?;
        // finite differences on the periodic/clamped value are only valid away
        // from the seams, so differentiate the lifted coordinate
        let lifted = |p: &[f64]| -> Result<(f64, f64)> {
            let cfg = Configuration {
                positions: p.to_vec(),
            };
            let (z1, z2) = spec.xi_value(&cfg)?;
            let unwrap = |z: f64, r: f64| z - (z - r).round();
            Ok((unwrap(z1, xi.z.0), unwrap(z2, xi.z.1)))
        };
        for k in 0..c.positions.len() {
            let mut p = c.positions.clone();
            p[k] += h;
            let up = lifted(&p)?;
            p[k] -= 2.0 * h;
            let dn = lifted(&p)?;
            let d1 = (up.0 - dn.0) / (2.0 * h);
            let d2 = (up.1 - dn.1) / (2.0 * h);
            worst = worst
                .max((d1 - xi.jac1[k]).abs())
                .max((d2 - xi.jac2[k]).abs());
        }
    }
    Ok(worst)
}

/// `|⟨∇u, v⟩ + ⟨u, div v⟩| / (‖∇u‖‖v‖ + ‖u‖‖div v‖)` for random fields on
/// several grids.
pub fn adjointness_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (n1, n2, l1, l2) in [
        (4, 4, 1.0, 1.0),
        (8, 6, 2.0, 0.5),
        (17, 32, 1.0, 3.0),
        (64, 64, 1.0, 1.0),
    ] {
        let g = RcGrid::new(n1, n2, l1, l2)?;
        let u = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let v = VectorField::from_fn(g, |_, _| {
            (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let gu = gradient(&u);
        let dv = divergence(&v);
        let lhs = gu.dot(&v)?;
        let rhs = u.dot(&dv)?;
        let scale = gu.norm() * v.norm() + u.norm() * dv.norm();
        worst = worst.max((lhs + rhs).abs() / scale);
    }
    Ok(worst)
}

/// `‖P(P F) - P F‖ / ‖P F‖` with a non-uniform weight.
pub fn idempotence_error(tol: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = RcGrid::unit(32, 32)?;
    let f = VectorField::from_fn(g, |_, _| {
        (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let tau = 2.0 * std::f64::consts::PI;
    let psi = ScalarField::from_fn(g, |z1, z2| 1.0 + 0.6 * (tau * z1).sin() * (tau * z2).cos());
    let max_iter = 100 * g.len();
    let once = project(&f, &psi, tol, max_iter)?;
    let twice = project(&once.gradient, &psi, tol, max_iter)?;
    Ok(twice.gradient.axpby(1.0, &once.gradient, -1.0)?.norm() / once.gradient.norm())
}

/// `I1(x) / I0(x)` from the power series of the modified Bessel functions.
pub fn bessel_ratio(x: f64) -> f64 {
    let series = |nu: u32| {
        let q = 0.25 * x * x;
        let mut term = if nu == 0 { 1.0 } else { 0.5 * x };
        let mut sum = term;
        for k in 1..200 {
            term *= q / (k as f64 * (k + nu) as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum
    };
    series(1) / series(0)
}

/// Step of the moment check. Euler–Maruyama shifts the sampled mean of
/// `cos(2πz)` by about `-7·dt` here, so the step is kept small enough for that
/// bias to stay well under one standard error at the run lengths used.
pub const MOMENT_DT: f64 = 1e-4;

/// Unbiased dynamics in the pure cosine well, where the mean of `cos(2πz)` is
/// the von Mises mean resultant `I1(β)/I0(β)`. Returns `|z|`, in standard errors.
pub fn boltzmann_moment_z(steps: u64, seed: u64) -> Result<f64> {
    let mut spec = SystemSpec::toy();
    spec.beta = 1.0;
    spec.toy = ToyParams {
        well_a: 1.0,
        well_b: 0.0,
        bath: 1.0,
    };
    let mut report = sample_boltzmann_check(&spec, steps, MOMENT_DT, seed)?;
    report.reference = bessel_ratio(spec.beta * spec.toy.well_a);
    Ok(report.z_score().abs())
}

/// Deposits after a short run minus `replicas · k_sub · sweeps`, for both modes.
pub fn deposit_defect() -> Result<f64> {
    let mut worst = 0u64;
    for mode in [Mode::Abf, Mode::Pabf] {
        let spec = RunSpec {
            n1: 16,
            n2: 16,
            n_sweeps: 30,
            k_sub: 7,
            replicas: 5,
            dt: 1e-3,
            mode,
            snapshots: SnapshotSchedule::Times(vec![]),
            ..RunSpec::default()
        };
        let out = run(&spec)?;
        let expect = (spec.replicas * spec.k_sub * spec.n_sweeps) as u64;
        worst = worst.max(out.state.total_count().abs_diff(expect));
    }
    Ok(worst as f64)
}

/// Run every check. `quick` shortens the sampling-based ones.
pub fn run_checks(quick: bool) -> Vec<CheckResult> {
    let n_cfg = if quick { 20 } else { 100 };
    let steps = if quick { 4_000_000 } else { 20_000_000 };
    let mut out = Vec::new();
    let mut push = |name: &str, value: Result<f64>, bound: f64| {
        out.push(match value {
            Ok(v) => result(name, v, bound),
            Err(e) => CheckResult {
                name: format!("{name} ({e})"),
                passed: false,
                value: f64::NAN,
                bound,
            },
        });
    };
    push(
        "toy forces vs finite differences",
        force_fd_error(&SystemSpec::toy(), n_cfg, 11),
        FORCE_TOL,
    );
    push(
        "trimer forces vs finite differences",
        force_fd_error(&SystemSpec::trimer(), n_cfg, 12),
        FORCE_TOL,
    );
    push(
        "toy xi jacobian vs finite differences",
        xi_jacobian_error(&SystemSpec::toy(), n_cfg, 13),
        FORCE_TOL,
    );
    push(
        "trimer xi jacobian vs finite differences",
        xi_jacobian_error(&SystemSpec::trimer(), n_cfg, 14),
        FORCE_TOL,
    );
    push(
        "gradient/divergence adjointness",
        adjointness_error(15),
        ADJOINT_TOL,
    );
    push(
        "projection idempotence",
        idempotence_error(DEFAULT_TOL, 16),
        10.0 * DEFAULT_TOL,
    );
    push(
        "Boltzmann cosine moment (standard errors)",
        boltzmann_moment_z(steps, 17),
        MOMENT_SIGMAS,
    );
    push("deposit count conservation", deposit_defect(), 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_ratio_values() {
        assert!((bessel_ratio(1.0) - 0.446_389_97).abs() < 1e-8);
        assert!((bessel_ratio(4.0) - 0.863_522_61).abs() < 1e-8);
        assert_eq!(bessel_ratio(0.0), 0.0);
    }

    #[test]
    fn quick_suite_passes() {
        for c in run_checks(true) {
            assert!(c.passed, "{c}");
        }
    }
}
