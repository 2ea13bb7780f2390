//! Binned running estimator of the conditional mean force and of the
//! reaction-coordinate density.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{RcGrid, ScalarField, VectorField};

pub const DEFAULT_N_MIN: u64 = 50;
pub const DEFAULT_EPS_DENSITY: f64 = 1e-3;

/// Per-bin occupancy counts and local-mean-force sums, accumulated over all
/// samples since the start of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasState {
    grid: RcGrid,
    count: Vec<u64>,
    sum1: Vec<f64>,
    sum2: Vec<f64>,
    n_min: u64,
    eps_density: f64,
}

impl BiasState {
    pub fn new(grid: RcGrid, n_min: u64, eps_density: f64) -> Result<Self> {
        if n_min == 0 {
            return Err(Error::Precondition("n_min must be at least 1".into()));
        }
        if !(eps_density.is_finite() && eps_density >= 0.0) {
            return Err(Error::Precondition(format!(
                "eps_density must be non-negative, got {eps_density}"
            )));
        }
        Ok(Self {
            grid,
            count: vec![0; grid.len()],
            sum1: vec![0.0; grid.len()],
            sum2: vec![0.0; grid.len()],
            n_min,
            eps_density,
        })
    }

    pub fn grid(&self) -> &RcGrid {
        &self.grid
    }

    pub fn n_min(&self) -> u64 {
        self.n_min
    }

    pub fn eps_density(&self) -> f64 {
        self.eps_density
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().sum()
    }

    /// Record one local-mean-force sample at reaction-coordinate value `z`.
    pub fn deposit(&mut self, z: (f64, f64), f: (f64, f64)) -> Result<()> {
        if !(f.0.is_finite() && f.1.is_finite()) {
            return Err(Error::NonFinite("local mean force sample"));
        }
        let (i, j) = self.grid.bin_index(z)?;
        let k = self.grid.index(i, j);
        self.count[k] += 1;
        self.sum1[k] += f.0;
        self.sum2[k] += f.1;
        Ok(())
    }

    /// Add another accumulator's deposits into this one.
    pub fn merge(&mut self, other: &BiasState) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for k in 0..self.count.len() {
            self.count[k] += other.count[k];
            self.sum1[k] += other.sum1[k];
            self.sum2[k] += other.sum2[k];
        }
        Ok(())
    }

    /// Empty accumulator on the same grid and settings.
    pub fn empty_like(&self) -> Self {
        Self {
            grid: self.grid,
            count: vec![0; self.count.len()],
            sum1: vec![0.0; self.count.len()],
            sum2: vec![0.0; self.count.len()],
            n_min: self.n_min,
            eps_density: self.eps_density,
        }
    }

    #[inline]
    fn ramp(&self, c: u64) -> f64 {
        (c as f64 / self.n_min as f64).min(1.0)
    }

    /// Mean-force estimate, ramped linearly from zero until a bin holds
    /// `n_min` samples.
    pub fn force_field(&self) -> VectorField {
        let n = self.count.len();
        let mut c1 = Vec::with_capacity(n);
        let mut c2 = Vec::with_capacity(n);
        for k in 0..n {
            let c = self.count[k];
            let scale = self.ramp(c) / c.max(1) as f64;
            c1.push(self.sum1[k] * scale);
            c2.push(self.sum2[k] * scale);
        }
        VectorField::new(self.grid, c1, c2).expect("finite sums give a finite field")
    }

    /// Histogram density normalized to integrate to one, without the floor.
    /// An empty histogram reports the uniform density.
    pub fn histogram_density(&self) -> ScalarField {
        let total = self.total_count();
        if total == 0 {
            return ScalarField::constant(self.grid, 1.0 / self.grid.area());
        }
        let norm = 1.0 / (total as f64 * self.grid.cell_area());
        let values = self.count.iter().map(|&c| c as f64 * norm).collect();
        ScalarField::new(self.grid, values).expect("finite density")
    }

    /// Histogram density floored at `eps_density`; the weight of the projection solve.
    pub fn density_field(&self) -> ScalarField {
        let eps = self.eps_density;
        self.histogram_density().map(|v| v.max(eps))
    }

    /// Checkpoint as CSV `i,j,count,sum1,sum2`. Sums are written with 17
    /// significant digits, which restores them bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.count.len() * 64);
        s.push_str("i,j,count,sum1,sum2\n");
        for k in 0..self.count.len() {
            let (i, j) = self.grid.unravel(k);
            let _ = writeln!(
                s,
                "{i},{j},{},{:.16e},{:.16e}",
                self.count[k], self.sum1[k], self.sum2[k]
            );
        }
        s
    }

    /// Restore a checkpoint written by [`BiasState::to_csv`] onto `grid`.
    pub fn from_csv(
        text: &str,
        grid: RcGrid,
        n_min: u64,
        eps_density: f64,
        origin: &Path,
    ) -> Result<Self> {
        let mut state = Self::new(grid, n_min, eps_density)?;
        let err = |line: usize, message: String| Error::Csv {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "i,j,count,sum1,sum2" => {}
            _ => return Err(err(1, "expected header `i,j,count,sum1,sum2`".into())),
        }
        let mut seen = vec![false; grid.len()];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(err(
                    ln + 1,
                    format!("expected 5 columns, got {}", cols.len()),
                ));
            }
            let parse_u = |s: &str| s.parse::<usize>().map_err(|e| err(ln + 1, e.to_string()));
            let i = parse_u(cols[0])?;
            let j = parse_u(cols[1])?;
            if i >= grid.n1() || j >= grid.n2() {
                return Err(err(ln + 1, format!("bin ({i},{j}) outside the grid")));
            }
            let k = grid.index(i, j);
            state.count[k] = cols[2]
                .parse()
                .map_err(|e: std::num::ParseIntError| err(ln + 1, e.to_string()))?;
            let parse_f = |s: &str| s.parse::<f64>().map_err(|e| err(ln + 1, e.to_string()));
            state.sum1[k] = parse_f(cols[3])?;
            state.sum2[k] = parse_f(cols[4])?;
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let (i, j) = grid.unravel(k);
            return Err(err(0, format!("missing bin ({i},{j})")));
        }
        Ok(state)
    }
}
