//! The coupled sampling loop: freeze a bias from the running estimate,
//! integrate a sweep while depositing samples, repeat. ABF biases with the raw
//! estimate, PABF with the gradient part of its weighted projection.

use rayon::prelude::*;

use crate::config::{Mode, RunSpec};
use crate::diagnostics::{flatness, l2_error, marginals};
use crate::error::{Error, Result};
use crate::estimator::BiasState;
use crate::grid::{ScalarField, VectorField};
use crate::integrator::{BiasForceView, Ensemble};
use crate::projection::project_from;

/// Fields and diagnostics recorded at the end of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub sweep: usize,
    pub time: f64,
    /// Ramped binned mean-force estimate `F_t`.
    pub force: VectorField,
    /// Mean-zero potential of the projection of `F_t`.
    pub potential: ScalarField,
    /// Its discrete gradient `∇A_t`.
    pub gradient: VectorField,
    /// Histogram density of all deposits so far, without the floor.
    pub density: ScalarField,
    pub marginals: (Vec<f64>, Vec<f64>),
    pub flatness: (f64, f64),
    /// Normalized L2 distance to the exact free energy, when one is known.
    pub l2_error: Option<f64>,
    pub total_deposits: u64,
}

/// Marginal flatness after one sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatnessSample {
    pub time: f64,
    pub flatness1: f64,
    pub flatness2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub mode: Mode,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    /// One entry per sweep.
    pub flatness_trace: Vec<FlatnessSample>,
    pub state: BiasState,
}

impl RunOutput {
    /// First time at which both marginals have flatness at most `threshold`.
    pub fn time_to_flatness(&self, threshold: f64) -> Option<f64> {
        self.flatness_trace
            .iter()
            .find(|s| s.flatness1 <= threshold && s.flatness2 <= threshold)
            .map(|s| s.time)
    }
}

fn marginal_flatness(psi: &ScalarField) -> ((Vec<f64>, Vec<f64>), (f64, f64)) {
    let m = marginals(psi);
    let f = (flatness(&m.0), flatness(&m.1));
    (m, f)
}

/// One ABF or PABF run, advanced a sweep at a time.
pub struct Simulation {
    spec: RunSpec,
    state: BiasState,
    ensemble: Ensemble,
    sweep: usize,
    reference: Option<ScalarField>,
    /// Last projected potential; warm start for the next solve.
    last_potential: Option<ScalarField>,
    max_iter: usize,
}

impl Simulation {
    pub fn new(spec: &RunSpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid()?;
        let reference = match spec.system.binned_free_energy(&grid) {
            Ok(a) => Some(a),
            Err(Error::UnsupportedSystem(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            spec: spec.clone(),
            state: BiasState::new(grid, spec.n_min, spec.eps_density)?,
            ensemble: Ensemble::from_initial(&spec.system, spec.replicas, spec.seed)?,
            sweep: 0,
            reference,
            last_potential: None,
            max_iter: spec.solver_max_iter(),
        })
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    /// Completed sweeps.
    pub fn sweep(&self) -> usize {
        self.sweep
    }

    pub fn time(&self) -> f64 {
        self.ensemble.time()
    }

    pub fn state(&self) -> &BiasState {
        &self.state
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    fn project_state(&mut self) -> Result<(VectorField, ScalarField, VectorField)> {
        let force = self.state.force_field();
        let psi = self.state.density_field();
        let p = project_from(
            &force,
            &psi,
            self.spec.tol,
            self.max_iter,
            self.last_potential.as_ref(),
        )?;
        self.last_potential = Some(p.potential.clone());
        Ok((force, p.potential, p.gradient))
    }

    /// The bias the next sweep will run under.
    pub fn freeze_bias(&mut self) -> Result<BiasForceView> {
        Ok(match self.spec.mode {
            Mode::Abf => BiasForceView::Raw(self.state.force_field()),
            Mode::Pabf => BiasForceView::Projected(self.project_state()?.2),
        })
    }

    /// Freeze the bias and take `k_sub` steps, depositing every replica after
    /// every step.
    pub fn run_sweep(&mut self) -> Result<()> {
        let sweep = self.sweep + 1;
        self.sweep_inner().map_err(|e| e.at_sweep(sweep))?;
        self.sweep = sweep;
        Ok(())
    }

    fn sweep_inner(&mut self) -> Result<()> {
        let bias = self.freeze_bias()?;
        let system = &self.spec.system;
        for _ in 0..self.spec.k_sub {
            self.ensemble.step(system, &bias, self.spec.dt)?;
            for (z, f) in self.ensemble.samples(system)? {
                self.state.deposit(z, f)?;
            }
        }
        Ok(())
    }

    pub fn flatness_sample(&self) -> FlatnessSample {
        let (_, (f1, f2)) = marginal_flatness(&self.state.histogram_density());
        FlatnessSample {
            time: self.time(),
            flatness1: f1,
            flatness2: f2,
        }
    }

    /// Record the current fields. The potential always comes from a fresh
    /// projection of the current estimate, in both modes.
    pub fn snapshot(&mut self) -> Result<Snapshot> {
        let sweep = self.sweep;
        let (force, potential, gradient) = self.project_state().map_err(|e| e.at_sweep(sweep))?;
        let density = self.state.histogram_density();
        let (marginals, flatness) = marginal_flatness(&density);
        let l2_error = match &self.reference {
            Some(r) => Some(l2_error(&potential, r)?),
            None => None,
        };
        Ok(Snapshot {
            sweep,
            time: self.time(),
            force,
            potential,
            gradient,
            density,
            marginals,
            flatness,
            l2_error,
            total_deposits: self.state.total_count(),
        })
    }

    pub fn into_state(self) -> BiasState {
        self.state
    }
}

/// Execute one run to completion.
pub fn run(spec: &RunSpec) -> Result<RunOutput> {
    let mut sim = Simulation::new(spec)?;
    let mut at = spec.snapshot_sweeps().into_iter().peekable();
    let mut snapshots = Vec::new();
    let mut trace = Vec::with_capacity(spec.n_sweeps);
    for _ in 0..spec.n_sweeps {
        sim.run_sweep()?;
        trace.push(sim.flatness_sample());
        if at.peek() == Some(&sim.sweep()) {
            at.next();
            snapshots.push(sim.snapshot()?);
        }
    }
    Ok(RunOutput {
        mode: spec.mode,
        seed: spec.seed,
        snapshots,
        flatness_trace: trace,
        state: sim.into_state(),
    })
}

/// splitmix64 finalizer; decorrelates run seeds derived from one master seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of run `index` under master seed `master`.
pub fn run_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

/// `r` independent runs with derived seeds, executed in parallel. Results are
/// returned in run order and do not depend on the thread count.
pub fn run_replicated(spec: &RunSpec, r: usize) -> Result<Vec<RunOutput>> {
    if r < 2 {
        return Err(Error::InsufficientReplication(r));
    }
    (0..r)
        .into_par_iter()
        .map(|i| {
            let mut s = spec.clone();
            s.seed = run_seed(spec.seed, i);
            run(&s)
        })
        .collect()
}
