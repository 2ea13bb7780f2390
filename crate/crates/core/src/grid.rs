//! Periodic 2-D grid over reaction-coordinate space.
//!
//! Nodes sit at `(i·h1, j·h2)` for `i in 0..n1`, `j in 0..n2`; bin `(i, j)` is the
//! half-open cell `[i·h1, (i+1)·h1) × [j·h2, (j+1)·h2)`. Field storage is
//! row-major with axis 1 fastest: `index(i, j) = i + n1·j`.
//!
//! `gradient` and `divergence` use centered periodic differences. Because the
//! centered difference matrix is antisymmetric, `divergence = -gradientᵀ` holds
//! exactly, which is what makes the weighted Poisson operator symmetric.

use crate::error::{Error, Result};

/// Wrap `x` into `[0, period)`.
#[inline]
pub fn wrap_periodic(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    // rem_euclid can round up to exactly `period` for tiny negative inputs
    if w >= period {
        0.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcGrid {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
}

impl RcGrid {
    pub const MIN_NODES: usize = 4;

    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        if n1 < Self::MIN_NODES || n2 < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes per axis, got {n1}x{n2}",
                Self::MIN_NODES
            )));
        }
        if !(l1.is_finite() && l2.is_finite() && l1 > 0.0 && l2 > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "axis lengths must be positive, got {l1} x {l2}"
            )));
        }
        Ok(Self { n1, n2, l1, l2 })
    }

    /// Grid over the unit torus.
    pub fn unit(n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, 1.0, 1.0)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn h1(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.h1() * self.h2()
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n1 * j
    }

    #[inline]
    pub fn unravel(&self, k: usize) -> (usize, usize) {
        (k % self.n1, k / self.n1)
    }

    /// Coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h1(), j as f64 * self.h2())
    }

    /// Midpoint of bin `(i, j)`, half a cell above node `(i, j)`. Binned
    /// averages are centred here rather than at the node.
    pub fn bin_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h1(), (j as f64 + 0.5) * self.h2())
    }

    /// Bin containing `z` after periodic wrapping.
    pub fn bin_index(&self, z: (f64, f64)) -> Result<(usize, usize)> {
        if !(z.0.is_finite() && z.1.is_finite()) {
            return Err(Error::NonFinite("reaction-coordinate value"));
        }
        let b1 = (wrap_periodic(z.0, self.l1) / self.h1()).floor() as usize;
        let b2 = (wrap_periodic(z.1, self.l2) / self.h2()).floor() as usize;
        Ok((b1.min(self.n1 - 1), b2.min(self.n2 - 1)))
    }

    pub(crate) fn check_same(&self, other: &RcGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Scalar values at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: RcGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: RcGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "scalar field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: RcGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: RcGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Sample `f(z1, z2)` at every node.
    pub fn from_fn(grid: RcGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n2() {
            for i in 0..grid.n1() {
                let (z1, z2) = grid.node(i, j);
                values.push(f(z1, z2));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &RcGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Grid average.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy shifted so that its grid average is zero.
    pub fn mean_zero(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn zip_with(
        &self,
        other: &ScalarField,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Quadrature-weighted inner product `h1·h2·Σ f·g`.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.grid.cell_area() * dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        (self.grid.cell_area() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Two-component vector values at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: RcGrid,
    comp1: Vec<f64>,
    comp2: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: RcGrid, comp1: Vec<f64>, comp2: Vec<f64>) -> Result<Self> {
        if comp1.len() != grid.len() || comp2.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "vector field has {}+{} values for {} nodes",
                comp1.len(),
                comp2.len(),
                grid.len()
            )));
        }
        if comp1.iter().chain(&comp2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector field"));
        }
        Ok(Self { grid, comp1, comp2 })
    }

    pub fn zeros(grid: RcGrid) -> Self {
        Self::constant(grid, (0.0, 0.0))
    }

    pub fn constant(grid: RcGrid, c: (f64, f64)) -> Self {
        Self {
            grid,
            comp1: vec![c.0; grid.len()],
            comp2: vec![c.1; grid.len()],
        }
    }

    pub fn from_fn(grid: RcGrid, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut comp1 = Vec::with_capacity(grid.len());
        let mut comp2 = Vec::with_capacity(grid.len());
        for j in 0..grid.n2() {
            for i in 0..grid.n1() {
                let (z1, z2) = grid.node(i, j);
                let (a, b) = f(z1, z2);
                comp1.push(a);
                comp2.push(b);
            }
        }
        Self { grid, comp1, comp2 }
    }

    pub fn from_components(c1: ScalarField, c2: ScalarField) -> Result<Self> {
        c1.grid.check_same(&c2.grid)?;
        Ok(Self {
            grid: c1.grid,
            comp1: c1.values,
            comp2: c2.values,
        })
    }

    pub fn grid(&self) -> &RcGrid {
        &self.grid
    }

    pub fn comp1(&self) -> &[f64] {
        &self.comp1
    }

    pub fn comp2(&self) -> &[f64] {
        &self.comp2
    }

    pub fn component(&self, k: usize) -> ScalarField {
        let values = if k == 0 { &self.comp1 } else { &self.comp2 };
        ScalarField {
            grid: self.grid,
            values: values.clone(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.index(i, j);
        (self.comp1[k], self.comp2[k])
    }

    /// Pointwise product with a scalar field.
    pub fn weighted(&self, w: &ScalarField) -> Result<Self> {
        self.grid.check_same(&w.grid)?;
        Ok(Self {
            grid: self.grid,
            comp1: self
                .comp1
                .iter()
                .zip(&w.values)
                .map(|(a, b)| a * b)
                .collect(),
            comp2: self
                .comp2
                .iter()
                .zip(&w.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &VectorField, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Ok(Self {
            grid: self.grid,
            comp1: lin(&self.comp1, &other.comp1),
            comp2: lin(&self.comp2, &other.comp2),
        })
    }

    /// Quadrature-weighted inner product `h1·h2·Σ (u1·v1 + u2·v2)`.
    pub fn dot(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.grid.cell_area()
            * (dot(&self.comp1, &other.comp1) + dot(&self.comp2, &other.comp2)))
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).map(f64::sqrt).unwrap_or(0.0)
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.comp1
            .iter()
            .zip(&other.comp1)
            .chain(self.comp2.iter().zip(&other.comp2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.comp1
            .iter()
            .chain(&self.comp2)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation with periodic wrap between nodes.
    pub fn interpolate(&self, z: (f64, f64)) -> (f64, f64) {
        let g = &self.grid;
        let s1 = wrap_periodic(z.0, g.l1) / g.h1();
        let s2 = wrap_periodic(z.1, g.l2) / g.h2();
        let i0 = (s1.floor() as usize).min(g.n1 - 1);
        let j0 = (s2.floor() as usize).min(g.n2 - 1);
        let t1 = s1 - i0 as f64;
        let t2 = s2 - j0 as f64;
        let i1 = (i0 + 1) % g.n1;
        let j1 = (j0 + 1) % g.n2;
        let k00 = g.index(i0, j0);
        let k10 = g.index(i1, j0);
        let k01 = g.index(i0, j1);
        let k11 = g.index(i1, j1);
        let w00 = (1.0 - t1) * (1.0 - t2);
        let w10 = t1 * (1.0 - t2);
        let w01 = (1.0 - t1) * t2;
        let w11 = t1 * t2;
        let lerp = |c: &[f64]| w00 * c[k00] + w10 * c[k10] + w01 * c[k01] + w11 * c[k11];
        (lerp(&self.comp1), lerp(&self.comp2))
    }

    /// Bilinear interpolation treating entry `(i, j)` as the value at the
    /// centre of bin `(i, j)`.
    pub fn interpolate_binned(&self, z: (f64, f64)) -> (f64, f64) {
        self.interpolate((z.0 - 0.5 * self.grid.h1(), z.1 - 0.5 * self.grid.h2()))
    }

    /// As [`Self::interpolate_binned`] but without wrapping: outside the outer
    /// bin centres the value of the nearest boundary bin is held constant.
    /// For reaction coordinates that live on an interval.
    pub fn interpolate_binned_clamped(&self, z: (f64, f64)) -> (f64, f64) {
        let g = &self.grid;
        let axis = |z: f64, h: f64, n: usize| {
            let s = (z / h - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (s.floor() as usize).min(n - 2);
            (i0, i0 + 1, s - i0 as f64)
        };
        let (i0, i1, t1) = axis(z.0, g.h1(), g.n1);
        let (j0, j1, t2) = axis(z.1, g.h2(), g.n2);
        let (k00, k10, k01, k11) = (
            g.index(i0, j0),
            g.index(i1, j0),
            g.index(i0, j1),
            g.index(i1, j1),
        );
        let lerp = |c: &[f64]| {
            (1.0 - t2) * ((1.0 - t1) * c[k00] + t1 * c[k10])
                + t2 * ((1.0 - t1) * c[k01] + t1 * c[k11])
        };
        (lerp(&self.comp1), lerp(&self.comp2))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Midpoint-rule integral `h1·h2·Σ f`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// Centered periodic difference along axis 1 into `out`.
pub(crate) fn diff1(g: &RcGrid, f: &[f64], out: &mut [f64]) {
    let (n1, n2) = (g.n1, g.n2);
    let inv = 0.5 / g.h1();
    for j in 0..n2 {
        let row = j * n1;
        out[row] = (f[row + 1] - f[row + n1 - 1]) * inv;
        for i in 1..n1 - 1 {
            out[row + i] = (f[row + i + 1] - f[row + i - 1]) * inv;
        }
        out[row + n1 - 1] = (f[row] - f[row + n1 - 2]) * inv;
    }
}

/// Centered periodic difference along axis 2 into `out`.
pub(crate) fn diff2(g: &RcGrid, f: &[f64], out: &mut [f64]) {
    let (n1, n2) = (g.n1, g.n2);
    let inv = 0.5 / g.h2();
    for j in 0..n2 {
        let up = ((j + 1) % n2) * n1;
        let down = ((j + n2 - 1) % n2) * n1;
        let row = j * n1;
        for i in 0..n1 {
            out[row + i] = (f[up + i] - f[down + i]) * inv;
        }
    }
}

/// Centered second-order periodic gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let mut comp1 = vec![0.0; g.len()];
    let mut comp2 = vec![0.0; g.len()];
    diff1(&g, &f.values, &mut comp1);
    diff2(&g, &f.values, &mut comp2);
    VectorField {
        grid: g,
        comp1,
        comp2,
    }
}

/// Centered second-order periodic divergence; the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut values = vec![0.0; g.len()];
    let mut tmp = vec![0.0; g.len()];
    diff1(&g, &v.comp1, &mut values);
    diff2(&g, &v.comp2, &mut tmp);
    for (a, b) in values.iter_mut().zip(&tmp) {
        *a += b;
    }
    ScalarField { grid: g, values }
}
