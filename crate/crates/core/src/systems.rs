//! Particle systems: potential energy, forces, reaction coordinate and the
//! per-configuration local mean force whose conditional average is the
//! mean force.
//!
//! Two kinds are provided. The separable toy system has an analytic free
//! energy and serves as an oracle; the trimer is a 2-D Lennard-Jones solvent
//! with a three-particle solute whose two bond lengths form the reaction
//! coordinate.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{wrap_periodic, RcGrid, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    ToySeparable,
    Trimer,
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::ToySeparable => "toy",
            SystemKind::Trimer => "trimer",
        }
    }
}

/// Toy potential `V = W(x1/L) + W(x2/L) + Σ_{j≥3} U(x_j)` with
/// `W(z) = a(1 - cos 2πz) + b(1 - cos 4πz)` and `U(x) = c(1 - cos 2πx/L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyParams {
    pub well_a: f64,
    pub well_b: f64,
    pub bath: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            well_a: 1.0,
            well_b: 0.3,
            bath: 1.0,
        }
    }
}

impl ToyParams {
    /// Well profile `W(z)` along one reaction-coordinate axis.
    pub fn well(&self, z: f64) -> f64 {
        self.well_a * (1.0 - (2.0 * PI * z).cos()) + self.well_b * (1.0 - (4.0 * PI * z).cos())
    }

    /// `W'(z)`.
    pub fn well_derivative(&self, z: f64) -> f64 {
        2.0 * PI * self.well_a * (2.0 * PI * z).sin()
            + 4.0 * PI * self.well_b * (4.0 * PI * z).sin()
    }
}

/// Trimer model parameters. Lengths are absolute (not in units of σ) except
/// `cutoff` and `clamp`, which are multiples of `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrimerParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub cutoff: f64,
    pub clamp: f64,
    pub bond_depth: f64,
    pub bond_r0: f64,
    pub bond_width: f64,
    pub angle_k: f64,
    pub angle_theta0: f64,
    pub xi_delta: f64,
    pub indices: [usize; 3],
}

impl Default for TrimerParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            sigma: 1.0,
            cutoff: 2.5,
            clamp: 0.8,
            bond_depth: 5.0,
            bond_r0: 2f64.powf(1.0 / 6.0),
            bond_width: 0.5,
            angle_k: 2.0,
            angle_theta0: PI,
            xi_delta: 0.1,
            indices: [0, 1, 2],
        }
    }
}

impl TrimerParams {
    pub fn r_compact(&self) -> f64 {
        self.bond_r0
    }

    pub fn r_stretched(&self) -> f64 {
        self.bond_r0 + 2.0 * self.bond_width
    }

    /// Slope of the affine bond-length to reaction-coordinate map.
    pub fn xi_slope(&self) -> f64 {
        (1.0 - 2.0 * self.xi_delta) / (self.r_stretched() - self.r_compact())
    }

    fn lj_raw(&self, r: f64) -> (f64, f64) {
        let sr6 = (self.sigma / r).powi(6);
        let e = 4.0 * self.epsilon * (sr6 * sr6 - sr6);
        let de = -24.0 * self.epsilon * (2.0 * sr6 * sr6 - sr6) / r;
        (e, de)
    }

    /// Truncated-shifted Lennard-Jones pair energy and its radial derivative,
    /// continued linearly below the clamp radius.
    pub fn lj_pair(&self, r: f64) -> (f64, f64) {
        let rc = self.cutoff * self.sigma;
        if r >= rc {
            return (0.0, 0.0);
        }
        let shift = self.lj_raw(rc).0;
        let rmin = self.clamp * self.sigma;
        if r < rmin {
            let (e, de) = self.lj_raw(rmin);
            (e - shift + de * (r - rmin), de)
        } else {
            let (e, de) = self.lj_raw(r);
            (e - shift, de)
        }
    }

    /// Double-well bond energy `D(1 - s²)²`, `s = (r - r0 - w)/w`, and its derivative.
    pub fn bond(&self, r: f64) -> (f64, f64) {
        let w = self.bond_width;
        let s = (r - self.bond_r0 - w) / w;
        let q = 1.0 - s * s;
        (self.bond_depth * q * q, -4.0 * self.bond_depth * s * q / w)
    }

    /// Normalized reaction coordinate of a bond length, before clamping.
    pub fn xi_of_length(&self, r: f64) -> f64 {
        self.xi_delta + self.xi_slope() * (r - self.r_compact())
    }
}

/// Largest value binned into the last cell of a unit axis.
const Z_MAX: f64 = 1.0 - f64::EPSILON;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub n_particles: usize,
    pub dim: usize,
    pub box_length: f64,
    pub beta: f64,
    pub toy: ToyParams,
    pub trimer: TrimerParams,
}

impl SystemSpec {
    /// Separable toy system with default wells on the unit box.
    pub fn toy() -> Self {
        Self {
            kind: SystemKind::ToySeparable,
            n_particles: 3,
            dim: 1,
            box_length: 1.0,
            beta: 4.0,
            toy: ToyParams::default(),
            trimer: TrimerParams::default(),
        }
    }

    /// Solvated trimer with default parameters (100 particles in 2-D).
    pub fn trimer() -> Self {
        Self {
            kind: SystemKind::Trimer,
            n_particles: 100,
            dim: 2,
            box_length: 10.0,
            beta: 4.0,
            toy: ToyParams::default(),
            trimer: TrimerParams::default(),
        }
    }

    pub fn n_coords(&self) -> usize {
        self.n_particles * self.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(key, message)| Error::Precondition(format!("{key}: {message}")))
    }

    /// Validity check naming the offending configuration key.
    pub(crate) fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err((
                "system.beta",
                format!("must be positive, got {}", self.beta),
            ));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err((
                "system.box_length",
                format!("must be positive, got {}", self.box_length),
            ));
        }
        if self.dim == 0 {
            return Err(("system.dim", "must be at least 1".into()));
        }
        match self.kind {
            SystemKind::ToySeparable => {
                if self.n_coords() < 2 {
                    return Err(("system.N", "toy system needs at least 2 coordinates".into()));
                }
            }
            SystemKind::Trimer => {
                let t = &self.trimer;
                if self.dim != 2 {
                    return Err((
                        "system.dim",
                        format!("trimer lives in 2-D, got {}", self.dim),
                    ));
                }
                if self.n_particles < 3 {
                    return Err((
                        "system.N",
                        format!("trimer needs N >= 3, got {}", self.n_particles),
                    ));
                }
                let [a, b, c] = t.indices;
                if a == b || b == c || a == c || a.max(b).max(c) >= self.n_particles {
                    return Err((
                        "system.trimer",
                        format!("indices {:?} must be distinct and < N", t.indices),
                    ));
                }
                if !(t.sigma > 0.0 && t.epsilon.is_finite()) {
                    return Err(("system.lj.sigma", "must be positive".into()));
                }
                if !(t.clamp > 0.0 && t.cutoff > t.clamp) {
                    return Err(("system.lj.cutoff", "must satisfy cutoff > clamp > 0".into()));
                }
                if t.bond_width.is_nan() || t.bond_width <= 0.0 {
                    return Err(("system.bond.width", "must be positive".into()));
                }
                if !(0.0..0.5).contains(&t.xi_delta) {
                    return Err((
                        "system.xi.delta",
                        format!("must lie in [0, 0.5), got {}", t.xi_delta),
                    ));
                }
                if 2.0 * t.cutoff * t.sigma > self.box_length {
                    return Err((
                        "system.box_length",
                        "must be at least twice the LJ cutoff".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_configuration(&self, c: &Configuration) -> Result<()> {
        if c.positions.len() != self.n_coords() {
            return Err(Error::BrokenConfiguration(format!(
                "expected {} coordinates, got {}",
                self.n_coords(),
                c.positions.len()
            )));
        }
        Ok(())
    }

    /// Minimum-image displacement `x_q - x_p` for particles `p`, `q`.
    #[inline]
    fn displacement(&self, x: &[f64], p: usize, q: usize) -> [f64; 2] {
        let l = self.box_length;
        let mut d = [0.0; 2];
        for (k, dk) in d.iter_mut().enumerate() {
            let v = x[2 * q + k] - x[2 * p + k];
            *dk = v - l * (v / l).round();
        }
        d
    }

    fn is_bonded(&self, p: usize, q: usize) -> bool {
        let [a, b, c] = self.trimer.indices;
        let pair = |u: usize, v: usize| (p == u && q == v) || (p == v && q == u);
        pair(a, b) || pair(b, c)
    }

    /// Total potential energy.
    pub fn energy(&self, c: &Configuration) -> Result<f64> {
        self.check_configuration(c)?;
        let x = &c.positions;
        match self.kind {
            SystemKind::ToySeparable => {
                let l = self.box_length;
                let t = &self.toy;
                let mut e = t.well(x[0] / l) + t.well(x[1] / l);
                for &xj in &x[2..] {
                    e += t.bath * (1.0 - (2.0 * PI * xj / l).cos());
                }
                Ok(e)
            }
            SystemKind::Trimer => {
                let t = &self.trimer;
                let rc2 = (t.cutoff * t.sigma).powi(2);
                let n = self.n_particles;
                let mut e = 0.0;
                for p in 0..n {
                    for q in p + 1..n {
                        let d = self.displacement(x, p, q);
                        let r2 = d[0] * d[0] + d[1] * d[1];
                        if r2 >= rc2 || self.is_bonded(p, q) {
                            continue;
                        }
                        e += t.lj_pair(r2.sqrt()).0;
                    }
                }
                let geom = TrimerGeometry::new(self, x)?;
                e += t.bond(geom.r1).0 + t.bond(geom.r2).0;
                e += 0.5 * t.angle_k * (geom.theta - t.angle_theta0).powi(2);
                Ok(e)
            }
        }
    }

    /// Physical forces `-∇V`.
    pub fn forces(&self, c: &Configuration) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_coords()];
        self.forces_into(c, &mut out)?;
        Ok(out)
    }

    pub(crate) fn forces_into(&self, c: &Configuration, out: &mut [f64]) -> Result<()> {
        self.check_configuration(c)?;
        let x = &c.positions;
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            SystemKind::ToySeparable => {
                let l = self.box_length;
                let t = &self.toy;
                out[0] = -t.well_derivative(x[0] / l) / l;
                out[1] = -t.well_derivative(x[1] / l) / l;
                let k = 2.0 * PI / l;
                for (o, &xj) in out[2..].iter_mut().zip(&x[2..]) {
                    *o = -t.bath * k * (k * xj).sin();
                }
            }
            SystemKind::Trimer => {
                let t = &self.trimer;
                let rc2 = (t.cutoff * t.sigma).powi(2);
                let n = self.n_particles;
                for p in 0..n {
                    for q in p + 1..n {
                        let d = self.displacement(x, p, q);
                        let r2 = d[0] * d[0] + d[1] * d[1];
                        if r2 >= rc2 || r2 == 0.0 || self.is_bonded(p, q) {
                            continue;
                        }
                        let r = r2.sqrt();
                        let de = t.lj_pair(r).1;
                        // force on q is -dU/dr · d/r, equal and opposite on p
                        for k in 0..2 {
                            let fk = -de * d[k] / r;
                            out[2 * q + k] += fk;
                            out[2 * p + k] -= fk;
                        }
                    }
                }
                let geom = TrimerGeometry::new(self, x)?;
                let grad = geom.bonded_gradient(t);
                for (slot, &p) in t.indices.iter().enumerate() {
                    for k in 0..2 {
                        out[2 * p + k] -= grad[2 * slot + k];
                    }
                }
            }
        }
        Ok(())
    }

    /// `∇V` restricted to the three trimer particles, laid out like the
    /// trimer 6-vectors. Costs O(N) instead of the O(N²) full force pass.
    fn solute_gradient(&self, x: &[f64], geom: &TrimerGeometry) -> [f64; 6] {
        let t = &self.trimer;
        let rc2 = (t.cutoff * t.sigma).powi(2);
        let mut g = geom.bonded_gradient(t);
        for (slot, &p) in t.indices.iter().enumerate() {
            for q in 0..self.n_particles {
                if q == p || self.is_bonded(p, q) {
                    continue;
                }
                let d = self.displacement(x, p, q);
                let r2 = d[0] * d[0] + d[1] * d[1];
                if r2 >= rc2 || r2 == 0.0 {
                    continue;
                }
                let r = r2.sqrt();
                let de = t.lj_pair(r).1;
                // d points from p to q, so ∂U/∂x_p = -dU/dr · d/r
                g[2 * slot] -= de * d[0] / r;
                g[2 * slot + 1] -= de * d[1] / r;
            }
        }
        g
    }

    /// Normalized reaction coordinate in `[0, 1)²` without the jacobians.
    pub fn xi_value(&self, c: &Configuration) -> Result<(f64, f64)> {
        self.check_configuration(c)?;
        let x = &c.positions;
        match self.kind {
            SystemKind::ToySeparable => {
                let l = self.box_length;
                Ok((unit_wrap(x[0] / l), unit_wrap(x[1] / l)))
            }
            SystemKind::Trimer => {
                let geom = TrimerGeometry::new(self, x)?;
                let t = &self.trimer;
                Ok((
                    clamp_unit(t.xi_of_length(geom.r1)),
                    clamp_unit(t.xi_of_length(geom.r2)),
                ))
            }
        }
    }

    /// Reaction coordinate value and its gradients with respect to all coordinates.
    ///
    /// For the trimer, the jacobians are those of the unclamped affine map so
    /// that bias forces and local mean forces stay defined in the clamped bins.
    pub fn xi(&self, c: &Configuration) -> Result<XiValue> {
        let z = self.xi_value(c)?;
        let n = self.n_coords();
        let mut jac1 = vec![0.0; n];
        let mut jac2 = vec![0.0; n];
        match self.kind {
            SystemKind::ToySeparable => {
                jac1[0] = 1.0 / self.box_length;
                jac2[1] = 1.0 / self.box_length;
            }
            SystemKind::Trimer => {
                let geom = TrimerGeometry::new(self, &c.positions)?;
                let a = self.trimer.xi_slope();
                for (slot, &p) in self.trimer.indices.iter().enumerate() {
                    for k in 0..2 {
                        jac1[2 * p + k] = a * geom.grad_r1[2 * slot + k];
                        jac2[2 * p + k] = a * geom.grad_r2[2 * slot + k];
                    }
                }
            }
        }
        Ok(XiValue { z, jac1, jac2 })
    }

    /// Add `b1·∇ξ₁ + b2·∇ξ₂` to `out` and return ξ.
    /// Whether `ξ` wraps around (toy) or is clamped to an interval (trimer
    /// bond lengths).
    pub fn xi_is_periodic(&self) -> bool {
        self.kind == SystemKind::ToySeparable
    }

    pub(crate) fn add_bias_force(
        &self,
        c: &Configuration,
        bias: impl Fn((f64, f64)) -> (f64, f64),
        out: &mut [f64],
    ) -> Result<(f64, f64)> {
        let z = self.xi_value(c)?;
        let (b1, b2) = bias(z);
        match self.kind {
            SystemKind::ToySeparable => {
                out[0] += b1 / self.box_length;
                out[1] += b2 / self.box_length;
            }
            SystemKind::Trimer => {
                let geom = TrimerGeometry::new(self, &c.positions)?;
                let a = self.trimer.xi_slope();
                for (slot, &p) in self.trimer.indices.iter().enumerate() {
                    for k in 0..2 {
                        let s = 2 * slot + k;
                        out[2 * p + k] += a * (b1 * geom.grad_r1[s] + b2 * geom.grad_r2[s]);
                    }
                }
            }
        }
        Ok(z)
    }

    /// Local mean force: a per-configuration statistic whose conditional
    /// expectation given `ξ = z` is `∇A(z)` (in normalized `z` units).
    pub fn local_mean_force_sample(&self, c: &Configuration) -> Result<(f64, f64)> {
        self.check_configuration(c)?;
        let x = &c.positions;
        match self.kind {
            SystemKind::ToySeparable => {
                let l = self.box_length;
                Ok((
                    self.toy.well_derivative(x[0] / l),
                    self.toy.well_derivative(x[1] / l),
                ))
            }
            SystemKind::Trimer => {
                let geom = TrimerGeometry::new(self, x)?;
                let grad_v = self.solute_gradient(x, &geom);
                let (w1, w2) = geom.dual_vectors(self.trimer.xi_slope());
                let (div1, div2) = geom.dual_divergences(self.trimer.xi_slope());
                let mut f1 = 0.0;
                let mut f2 = 0.0;
                for s in 0..6 {
                    f1 += grad_v[s] * w1[s];
                    f2 += grad_v[s] * w2[s];
                }
                let kt = 1.0 / self.beta;
                Ok((f1 - kt * div1, f2 - kt * div2))
            }
        }
    }

    /// Free energy of the toy system on `grid`, shifted to zero grid mean.
    pub fn analytic_free_energy(&self, grid: &RcGrid) -> Result<ScalarField> {
        if self.kind != SystemKind::ToySeparable {
            return Err(Error::UnsupportedSystem(self.kind.name()));
        }
        let t = self.toy;
        Ok(ScalarField::from_fn(*grid, |z1, z2| t.well(z1) + t.well(z2)).mean_zero())
    }

    /// As [`Self::analytic_free_energy`] but sampled at bin centres, which is
    /// where binned estimates live.
    pub fn binned_free_energy(&self, grid: &RcGrid) -> Result<ScalarField> {
        if self.kind != SystemKind::ToySeparable {
            return Err(Error::UnsupportedSystem(self.kind.name()));
        }
        let t = self.toy;
        let values = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.unravel(k);
                let (z1, z2) = grid.bin_center(i, j);
                t.well(z1) + t.well(z2)
            })
            .collect();
        Ok(ScalarField::new(*grid, values)?.mean_zero())
    }

    /// Starting configuration: the global minimum for the toy system, a square
    /// lattice with the trimer at rest for the trimer system.
    pub fn initial_configuration(&self) -> Configuration {
        match self.kind {
            SystemKind::ToySeparable => Configuration {
                positions: vec![0.0; self.n_coords()],
            },
            SystemKind::Trimer => {
                let n = self.n_particles;
                let m = (n as f64).sqrt().ceil() as usize;
                let s = self.box_length / m as f64;
                let site = |k: usize| [((k % m) as f64 + 0.5) * s, ((k / m) as f64 + 0.5) * s];
                let [a, b, c] = self.trimer.indices;
                let mut positions = vec![0.0; 2 * n];
                let mut next = 3;
                for p in 0..n {
                    let k = if p == a {
                        0
                    } else if p == b {
                        1
                    } else if p == c {
                        2
                    } else {
                        next += 1;
                        next - 1
                    };
                    let xy = site(k);
                    positions[2 * p] = xy[0];
                    positions[2 * p + 1] = xy[1];
                }
                // straighten the trimer at its compact rest length around the center particle
                let r0 = self.trimer.bond_r0;
                positions[2 * a] = positions[2 * b] - r0;
                positions[2 * a + 1] = positions[2 * b + 1];
                positions[2 * c] = positions[2 * b] + r0;
                positions[2 * c + 1] = positions[2 * b + 1];
                let mut cfg = Configuration { positions };
                cfg.wrap(self.box_length);
                cfg
            }
        }
    }

    /// Random configuration: uniform coordinates for the toy system, a lattice
    /// jittered by up to `jitter` per coordinate for the trimer.
    pub fn random_configuration(&self, rng: &mut impl Rng, jitter: f64) -> Configuration {
        let mut cfg = match self.kind {
            SystemKind::ToySeparable => Configuration {
                positions: (0..self.n_coords())
                    .map(|_| rng.gen_range(0.0..self.box_length))
                    .collect(),
            },
            SystemKind::Trimer => {
                let mut cfg = self.initial_configuration();
                for v in cfg.positions.iter_mut() {
                    *v += rng.gen_range(-jitter..=jitter);
                }
                cfg
            }
        };
        cfg.wrap(self.box_length);
        cfg
    }
}

#[inline]
fn unit_wrap(z: f64) -> f64 {
    wrap_periodic(z, 1.0)
}

#[inline]
fn clamp_unit(z: f64) -> f64 {
    z.clamp(0.0, Z_MAX)
}

/// Particle positions, flattened particle-major, wrapped into the box.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub positions: Vec<f64>,
}

impl Configuration {
    pub fn new(positions: Vec<f64>, box_length: f64) -> Result<Self> {
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("configuration"));
        }
        let mut c = Self { positions };
        c.wrap(box_length);
        Ok(c)
    }

    pub fn wrap(&mut self, box_length: f64) {
        for v in self.positions.iter_mut() {
            *v = wrap_periodic(*v, box_length);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|v| v.is_finite())
    }

    /// CSV dump `particle,coord0,...`.
    pub fn to_csv(&self, dim: usize) -> String {
        let mut s = String::from("particle");
        for k in 0..dim {
            s.push_str(&format!(",coord{k}"));
        }
        s.push('\n');
        for (p, chunk) in self.positions.chunks(dim).enumerate() {
            s.push_str(&p.to_string());
            for v in chunk {
                s.push_str(&format!(",{v:.16e}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct XiValue {
    pub z: (f64, f64),
    pub jac1: Vec<f64>,
    pub jac2: Vec<f64>,
}

/// Bond vectors of the trimer `a-b-c` and their derived quantities. All
/// 6-vectors are laid out `[a.x, a.y, b.x, b.y, c.x, c.y]`.
struct TrimerGeometry {
    r1: f64,
    r2: f64,
    e1: [f64; 2],
    e2: [f64; 2],
    /// Bend angle at the central particle in `[0, π]`.
    theta: f64,
    grad_r1: [f64; 6],
    grad_r2: [f64; 6],
    u: [f64; 2],
    v: [f64; 2],
}

impl TrimerGeometry {
    fn new(spec: &SystemSpec, x: &[f64]) -> Result<Self> {
        let [a, b, c] = spec.trimer.indices;
        let d1 = spec.displacement(x, a, b);
        let d2 = spec.displacement(x, b, c);
        let r1 = d1[0].hypot(d1[1]);
        let r2 = d2[0].hypot(d2[1]);
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(Error::BrokenConfiguration(format!(
                "trimer bond of zero length (r1 = {r1}, r2 = {r2})"
            )));
        }
        let e1 = [d1[0] / r1, d1[1] / r1];
        let e2 = [d2[0] / r2, d2[1] / r2];
        // arms from the central particle
        let u = [-d1[0], -d1[1]];
        let v = d2;
        let cross = u[0] * v[1] - u[1] * v[0];
        let dotp = u[0] * v[0] + u[1] * v[1];
        let theta = cross.abs().atan2(dotp);
        Ok(Self {
            r1,
            r2,
            e1,
            e2,
            theta,
            grad_r1: [-e1[0], -e1[1], e1[0], e1[1], 0.0, 0.0],
            grad_r2: [0.0, 0.0, -e2[0], -e2[1], e2[0], e2[1]],
            u,
            v,
        })
    }

    /// Gradient of the bonded (double-well + angle) energy.
    fn bonded_gradient(&self, t: &TrimerParams) -> [f64; 6] {
        let db1 = t.bond(self.r1).1;
        let db2 = t.bond(self.r2).1;
        let mut g = [0.0; 6];
        for (gs, (a, b)) in g.iter_mut().zip(self.grad_r1.iter().zip(&self.grad_r2)) {
            *gs = db1 * a + db2 * b;
        }
        let dtheta = t.angle_k * (self.theta - t.angle_theta0);
        if dtheta != 0.0 {
            let gt = self.grad_theta();
            for s in 0..6 {
                g[s] += dtheta * gt[s];
            }
        }
        g
    }

    fn grad_theta(&self) -> [f64; 6] {
        let (u, v) = (self.u, self.v);
        let cross = u[0] * v[1] - u[1] * v[0];
        let dotp = u[0] * v[0] + u[1] * v[1];
        let denom = (u[0] * u[0] + u[1] * u[1]) * (v[0] * v[0] + v[1] * v[1]);
        // θ = |φ| with φ = atan2(cross, dot)
        let sign = if cross < 0.0 { -1.0 } else { 1.0 };
        let du = [
            sign * (dotp * v[1] - cross * v[0]) / denom,
            sign * (-dotp * v[0] - cross * v[1]) / denom,
        ];
        let dv = [
            sign * (-dotp * u[1] - cross * u[0]) / denom,
            sign * (dotp * u[0] - cross * u[1]) / denom,
        ];
        [du[0], du[1], -du[0] - dv[0], -du[1] - dv[1], dv[0], dv[1]]
    }

    fn cos_bonds(&self) -> f64 {
        self.e1[0] * self.e2[0] + self.e1[1] * self.e2[1]
    }

    /// Gradient of `c = e1·e2`.
    fn grad_cos(&self) -> [f64; 6] {
        let c = self.cos_bonds();
        let g1 = [
            (self.e2[0] - c * self.e1[0]) / self.r1,
            (self.e2[1] - c * self.e1[1]) / self.r1,
        ];
        let g2 = [
            (self.e1[0] - c * self.e2[0]) / self.r2,
            (self.e1[1] - c * self.e2[1]) / self.r2,
        ];
        [-g1[0], -g1[1], g1[0] - g2[0], g1[1] - g2[1], g2[0], g2[1]]
    }

    /// Vectors `w_k = Σ_l (G⁻¹)_kl ∇ξ_l` dual to the reaction-coordinate
    /// gradients, where `G` is their Gram matrix.
    fn dual_vectors(&self, slope: f64) -> ([f64; 6], [f64; 6]) {
        let c = self.cos_bonds();
        let q = 1.0 / (slope * (4.0 - c * c));
        let mut w1 = [0.0; 6];
        let mut w2 = [0.0; 6];
        for s in 0..6 {
            w1[s] = q * (2.0 * self.grad_r1[s] + c * self.grad_r2[s]);
            w2[s] = q * (c * self.grad_r1[s] + 2.0 * self.grad_r2[s]);
        }
        (w1, w2)
    }

    /// Analytic divergences of the dual vectors.
    fn dual_divergences(&self, slope: f64) -> (f64, f64) {
        let c = self.cos_bonds();
        let m = 4.0 - c * c;
        let q = 1.0 / (slope * m);
        let gc = self.grad_cos();
        let dot6 = |a: &[f64; 6], b: &[f64; 6]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let gc_r1 = dot6(&gc, &self.grad_r1);
        let gc_r2 = dot6(&gc, &self.grad_r2);
        // Laplacian of a bond length in 2-D: (d - 1)/r for each endpoint
        let lap1 = 2.0 / self.r1;
        let lap2 = 2.0 / self.r2;
        // ∇q = q · (2c/m) ∇c
        let dq = 2.0 * c / m;
        let div1 = q * (dq * (2.0 * gc_r1 + c * gc_r2) + 2.0 * lap1 + gc_r2 + c * lap2);
        let div2 = q * (dq * (c * gc_r1 + 2.0 * gc_r2) + c * lap1 + gc_r1 + 2.0 * lap2);
        (div1, div2)
    }
}
