//! Euler–Maruyama integration of biased overdamped Langevin dynamics for an
//! ensemble of independent replicas sharing one bias.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::systems::{Configuration, SystemKind, SystemSpec};

/// The bias force field applied during one sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum BiasForceView {
    /// Unbiased dynamics.
    Unbiased,
    /// Gradient of the projected free-energy estimate (PABF).
    Projected(VectorField),
    /// Raw binned mean-force estimate (ABF).
    Raw(VectorField),
}

impl BiasForceView {
    pub fn field(&self) -> Option<&VectorField> {
        match self {
            BiasForceView::Unbiased => None,
            BiasForceView::Projected(f) | BiasForceView::Raw(f) => Some(f),
        }
    }
}

/// Reaction-coordinate value and local mean force of one replica.
pub type Sample = ((f64, f64), (f64, f64));

/// `M` replica configurations advanced in lockstep, each with its own
/// random stream derived from `(seed, replica index)`.
#[derive(Clone, Debug)]
pub struct Ensemble {
    replicas: Vec<Configuration>,
    rngs: Vec<ChaCha8Rng>,
    time: f64,
    steps: u64,
    noise: bool,
    buf: Vec<f64>,
}

impl Ensemble {
    pub fn new(spec: &SystemSpec, replicas: Vec<Configuration>, seed: u64) -> Result<Self> {
        if replicas.is_empty() {
            return Err(Error::Precondition(
                "ensemble needs at least one replica".into(),
            ));
        }
        for r in &replicas {
            if r.positions.len() != spec.n_coords() || !r.is_finite() {
                return Err(Error::BrokenConfiguration(
                    "replica does not match the system".into(),
                ));
            }
        }
        let rngs = (0..replicas.len())
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(m as u64);
                rng
            })
            .collect();
        Ok(Self {
            replicas,
            rngs,
            time: 0.0,
            steps: 0,
            noise: true,
            buf: vec![0.0; spec.n_coords()],
        })
    }

    /// `m` copies of the system's initial configuration.
    pub fn from_initial(spec: &SystemSpec, m: usize, seed: u64) -> Result<Self> {
        Self::new(spec, vec![spec.initial_configuration(); m], seed)
    }

    pub fn replicas(&self) -> &[Configuration] {
        &self.replicas
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Switch the Brownian term off (zero-temperature gradient flow) or back on.
    pub fn set_noise(&mut self, enabled: bool) {
        self.noise = enabled;
    }

    /// One Euler–Maruyama step of `dX = (-∇V + Σ_k B_k(ξ) ∇ξ_k) dt + √(2/β) dW`.
    pub fn step(&mut self, spec: &SystemSpec, bias: &BiasForceView, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Precondition(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let sigma = if self.noise {
            (2.0 * dt / spec.beta).sqrt()
        } else {
            0.0
        };
        let field = bias.field();
        let step = self.steps + 1;
        for (m, (cfg, rng)) in self.replicas.iter_mut().zip(&mut self.rngs).enumerate() {
            spec.forces_into(cfg, &mut self.buf)?;
            if let Some(f) = field {
                if spec.xi_is_periodic() {
                    spec.add_bias_force(cfg, |z| f.interpolate_binned(z), &mut self.buf)?;
                } else {
                    spec.add_bias_force(cfg, |z| f.interpolate_binned_clamped(z), &mut self.buf)?;
                }
            }
            for (x, force) in cfg.positions.iter_mut().zip(&self.buf) {
                let g: f64 = if self.noise {
                    rng.sample(StandardNormal)
                } else {
                    0.0
                };
                *x += force * dt + sigma * g;
            }
            if !cfg.is_finite() {
                return Err(Error::Blowup { replica: m, step });
            }
            cfg.wrap(spec.box_length);
        }
        self.steps = step;
        self.time += dt;
        Ok(())
    }

    /// Reaction coordinate and local mean force of every replica, in replica order.
    pub fn samples(&self, spec: &SystemSpec) -> Result<Vec<Sample>> {
        self.replicas
            .iter()
            .map(|c| Ok((spec.xi_value(c)?, spec.local_mean_force_sample(c)?)))
            .collect()
    }
}

/// Time average of `cos(2π x1 / L)` with its batch-means standard error and
/// the quadrature value under the Boltzmann–Gibbs marginal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub estimate: f64,
    pub std_error: f64,
    pub reference: f64,
    pub samples: u64,
}

impl MomentReport {
    /// Deviation from the reference in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.reference) / self.std_error
    }
}

const BATCHES: usize = 64;

/// Sample the unbiased toy dynamics and compare `E[cos(2π x1/L)]` with quadrature.
pub fn sample_boltzmann_check(
    spec: &SystemSpec,
    steps: u64,
    dt: f64,
    seed: u64,
) -> Result<MomentReport> {
    if spec.kind != SystemKind::ToySeparable {
        return Err(Error::UnsupportedSystem(spec.kind.name()));
    }
    if steps < 2 * BATCHES as u64 {
        return Err(Error::Precondition(format!(
            "need at least {} steps",
            2 * BATCHES
        )));
    }
    let mut ens = Ensemble::from_initial(spec, 1, seed)?;
    let burn_in = steps / 10;
    for _ in 0..burn_in {
        ens.step(spec, &BiasForceView::Unbiased, dt)?;
    }
    let per_batch = (steps - burn_in) / BATCHES as u64;
    let l = spec.box_length;
    let mut batch_means = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let mut acc = 0.0;
        for _ in 0..per_batch {
            ens.step(spec, &BiasForceView::Unbiased, dt)?;
            acc += (2.0 * PI * ens.replicas()[0].positions[0] / l).cos();
        }
        batch_means.push(acc / per_batch as f64);
    }
    let mean = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(MomentReport {
        estimate: mean,
        std_error: (var / BATCHES as f64).sqrt(),
        reference: toy_cos_moment(spec),
        samples: per_batch * BATCHES as u64,
    })
}

/// `∫ cos(2πz) e^{-βW(z)} dz / ∫ e^{-βW(z)} dz` by the periodic midpoint rule.
pub fn toy_cos_moment(spec: &SystemSpec) -> f64 {
    let n = 4096;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        let z = (k as f64 + 0.5) / n as f64;
        let w = (-spec.beta * spec.toy.well(z)).exp();
        num += (2.0 * PI * z).cos() * w;
        den += w;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RcGrid;
    use crate::systems::ToyParams;

    fn flat_toy() -> SystemSpec {
        let mut s = SystemSpec::toy();
        s.toy = ToyParams {
            well_a: 0.0,
            well_b: 0.0,
            bath: 0.0,
        };
        s
    }

    #[test]
    fn free_diffusion_variance() {
        let s = flat_toy();
        let dt = 1e-3;
        let n = 100_000usize;
        let mut ens = Ensemble::from_initial(&s, 1, 11).unwrap();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        let mut prev = ens.replicas()[0].positions[2];
        for _ in 0..n {
            ens.step(&s, &BiasForceView::Unbiased, dt).unwrap();
            let x = ens.replicas()[0].positions[2];
            let mut d = x - prev;
            d -= d.round();
            prev = x;
            sum += d;
            sum2 += d * d;
            sum4 += d.powi(4);
        }
        let var = sum2 / n as f64 - (sum / n as f64).powi(2);
        let expect = 2.0 * dt / s.beta;
        // s.e. of a sample second moment: sqrt((E d⁴ - (E d²)²)/n)
        let se = ((sum4 / n as f64 - (sum2 / n as f64).powi(2)) / n as f64).sqrt();
        assert!(
            (var - expect).abs() < 3.0 * se,
            "{var} vs {expect} (se {se})"
        );
    }

    #[test]
    fn noise_is_isotropic() {
        let s = flat_toy();
        let dt = 1e-3;
        let n = 20_000usize;
        let mut ens = Ensemble::from_initial(&s, 1, 12).unwrap();
        let mut prev = ens.replicas()[0].positions.clone();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            ens.step(&s, &BiasForceView::Unbiased, dt).unwrap();
            let x = &ens.replicas()[0].positions;
            let mut d0 = x[0] - prev[0];
            let mut d1 = x[1] - prev[1];
            d0 -= d0.round();
            d1 -= d1.round();
            sxy += d0 * d1;
            sxx += d0 * d0;
            syy += d1 * d1;
            prev = x.clone();
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 3.0 / (n as f64).sqrt(), "rho {rho}");
    }

    #[test]
    fn zero_temperature_descends() {
        let mut s = SystemSpec::toy();
        s.toy = ToyParams {
            well_a: 1.0,
            well_b: 0.0,
            bath: 0.0,
        };
        let mut ens = Ensemble::new(
            &s,
            vec![Configuration {
                positions: vec![0.25, 0.0, 0.0],
            }],
            0,
        )
        .unwrap();
        ens.set_noise(false);
        let mut last_x = 0.25;
        let mut last_e = s.energy(&ens.replicas()[0]).unwrap();
        for _ in 0..200 {
            ens.step(&s, &BiasForceView::Unbiased, 1e-3).unwrap();
            let x = ens.replicas()[0].positions[0];
            let e = s.energy(&ens.replicas()[0]).unwrap();
            assert!(x < last_x && x > 0.0);
            assert!(e < last_e);
            last_x = x;
            last_e = e;
        }
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let s = SystemSpec::toy();
        let g = RcGrid::unit(8, 8).unwrap();
        let bias = BiasForceView::Raw(VectorField::from_fn(g, |z1, z2| (z1.sin(), z2.cos())));
        let run = || {
            let mut e = Ensemble::from_initial(&s, 4, 99).unwrap();
            for _ in 0..500 {
                e.step(&s, &bias, 5e-4).unwrap();
            }
            e.replicas().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn replica_streams_differ() {
        let s = SystemSpec::toy();
        let mut e = Ensemble::from_initial(&s, 2, 1).unwrap();
        e.step(&s, &BiasForceView::Unbiased, 1e-3).unwrap();
        assert_ne!(e.replicas()[0], e.replicas()[1]);
    }

    #[test]
    fn blowup_names_replica_and_step() {
        let mut s = SystemSpec::toy();
        s.toy.well_a = 1e300;
        let mut e = Ensemble::new(
            &s,
            vec![
                Configuration {
                    positions: vec![0.0, 0.0, 0.0],
                },
                Configuration {
                    positions: vec![0.1, 0.0, 0.0],
                },
            ],
            0,
        )
        .unwrap();
        e.set_noise(false);
        match e.step(&s, &BiasForceView::Unbiased, 1e10) {
            Err(Error::Blowup { replica, step }) => {
                assert_eq!((replica, step), (1, 1));
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn cos_moment_quadrature_matches_bessel_ratio() {
        let mut s = SystemSpec::toy();
        s.beta = 1.0;
        s.toy = ToyParams {
            well_a: 1.0,
            well_b: 0.0,
            bath: 0.0,
        };
        // I1(1)/I0(1) from the power series of the modified Bessel functions
        let series = |nu: i32| {
            let mut term = if nu == 0 { 1.0 } else { 0.5 };
            let mut sum = term;
            for k in 1..40 {
                term *= 0.25 / (k as f64 * (k + nu) as f64);
                sum += term;
            }
            sum
        };
        let ratio = series(1) / series(0);
        assert!((toy_cos_moment(&s) - ratio).abs() < 1e-12);
        assert!((ratio - 0.4464).abs() < 1e-4);
    }
}
