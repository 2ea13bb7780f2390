//! Weighted Helmholtz projection of a force field onto gradients.
//!
//! Given an estimated mean force `F` and a density `ψ > 0`, find the potential
//! `A` solving
//!
//! ```text
//! div(ψ ∇A) = div(ψ F)    on the periodic grid,
//! ```
//!
//! i.e. the minimizer of `∫ |∇A - F|² ψ`. With the collocated operators of
//! [`crate::grid`] the discrete operator is `-Gᵀ diag(ψ) G`, symmetric and
//! negative semidefinite, so the system is solved with preconditioned
//! conjugate gradients on the complement of its kernel.
//!
//! The kernel of the centered gradient is larger than the constants: on an
//! axis with an even node count the alternating mode `(-1)^i` has zero
//! centered difference too. All of these modes are removed from the
//! right-hand side and the iterates, which selects the minimum-norm solution.
//! It has zero mean, and its gradient is unaffected by the choice.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{diff1, diff2, divergence, dot, gradient, RcGrid, ScalarField, VectorField};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Default iteration cap: ten sweeps' worth of unknowns.
pub fn default_max_iter(grid: &RcGrid) -> usize {
    10 * grid.len()
}

/// Output of [`project`]: the mean-zero potential and its discrete gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub potential: ScalarField,
    pub gradient: VectorField,
    /// Final relative residual `‖b - K A‖ / ‖b‖`, recomputed from scratch.
    pub residual: f64,
    pub iterations: usize,
}

/// Project `force` onto a gradient field with weight `psi`.
pub fn project(
    force: &VectorField,
    psi: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionResult> {
    project_from(force, psi, tol, max_iter, None)
}

/// As [`project`], starting the iteration from `guess` (typically the
/// previous solution when `force` and `psi` change slowly).
pub fn project_from(
    force: &VectorField,
    psi: &ScalarField,
    tol: f64,
    max_iter: usize,
    guess: Option<&ScalarField>,
) -> Result<ProjectionResult> {
    let grid = *force.grid();
    grid.check_same(psi.grid())?;
    if let Some(g) = guess {
        grid.check_same(g.grid())?;
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Precondition(format!(
            "solver tolerance must lie in (0, 1), got {tol}"
        )));
    }
    let psi_min = psi.min();
    if psi_min.is_nan() || psi_min <= 0.0 {
        return Err(Error::Precondition(format!(
            "density weight must be positive everywhere, min is {psi_min}"
        )));
    }

    let op = WeightedLaplacian::new(grid, psi.values());
    let n = grid.len();

    let mut b = divergence(&force.weighted(psi)?).into_values();
    b.iter_mut().for_each(|v| *v = -*v);
    op.remove_kernel(&mut b);
    let b_norm = dot(&b, &b).sqrt();

    let mut x = match guess {
        Some(g) => g.values().to_vec(),
        None => vec![0.0; n],
    };
    op.remove_kernel(&mut x);

    if b_norm == 0.0 {
        let zero = ScalarField::zeros(grid);
        return Ok(ProjectionResult {
            gradient: gradient(&zero),
            potential: zero,
            residual: 0.0,
            iterations: 0,
        });
    }

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |x: &[f64], r: &mut [f64]| {
        op.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(&b) {
            *ri = bi - *ri;
        }
        dot(r, r).sqrt()
    };

    let mut res = true_residual(&x, &mut r);
    'restart: while res > tol * b_norm {
        if iterations >= max_iter {
            break;
        }
        op.precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                // the search direction collapsed into the kernel
                break;
            }
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            if dot(&r, &r).sqrt() <= tol * b_norm {
                op.remove_kernel(&mut x);
                res = true_residual(&x, &mut r);
                continue 'restart;
            }
            op.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        op.remove_kernel(&mut x);
        res = true_residual(&x, &mut r);
        if iterations >= max_iter {
            break;
        }
    }

    op.remove_kernel(&mut x);
    let rel = res / b_norm;
    if rel > tol {
        return Err(Error::SolverFailure {
            residual: rel,
            iterations,
        });
    }
    let potential = ScalarField::new(grid, x)?;
    Ok(ProjectionResult {
        gradient: gradient(&potential),
        potential,
        residual: rel,
        iterations,
    })
}

/// Norm of `div(ψF - ψ∇A)`, the divergence of the non-gradient remainder.
pub fn projection_defect(
    force: &VectorField,
    psi: &ScalarField,
    result: &ProjectionResult,
) -> Result<f64> {
    let remainder = force
        .weighted(psi)?
        .axpby(1.0, &result.gradient.weighted(psi)?, -1.0)?;
    Ok(divergence(&remainder).norm())
}

/// Matrix-free `K = -div ∘ ψ ∘ grad` with its preconditioner and kernel basis.
struct WeightedLaplacian<'a> {
    grid: RcGrid,
    psi: &'a [f64],
    precond: Preconditioner,
    kernel: Vec<Vec<f64>>,
    scratch: std::cell::RefCell<(Vec<f64>, Vec<f64>)>,
}

impl<'a> WeightedLaplacian<'a> {
    fn new(grid: RcGrid, psi: &'a [f64]) -> Self {
        Self {
            grid,
            psi,
            precond: Preconditioner::new(grid, psi),
            kernel: kernel_basis(&grid),
            scratch: std::cell::RefCell::new((vec![0.0; grid.len()], vec![0.0; grid.len()])),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut s = self.scratch.borrow_mut();
        let (g1, g2) = &mut *s;
        diff1(&self.grid, x, g1);
        diff2(&self.grid, x, g2);
        for k in 0..x.len() {
            g1[k] *= self.psi[k];
            g2[k] *= self.psi[k];
        }
        diff1(&self.grid, g1, out);
        diff2(&self.grid, g2, g1);
        for (o, v) in out.iter_mut().zip(g1.iter()) {
            *o = -(*o + v);
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        match &self.precond {
            Preconditioner::Jacobi(inv_diag) => {
                for k in 0..r.len() {
                    z[k] = inv_diag[k] * r[k];
                }
            }
            Preconditioner::Spectral(s) => s.apply(r, z),
        }
        self.remove_kernel(z);
    }

    fn remove_kernel(&self, x: &mut [f64]) {
        for m in &self.kernel {
            let c = dot(x, m);
            for (xi, mi) in x.iter_mut().zip(m) {
                *xi -= c * mi;
            }
        }
    }
}

/// Weight contrast `max ψ / min ψ` above which the spectral preconditioner
/// loses to plain diagonal scaling.
const SPECTRAL_MAX_CONTRAST: f64 = 20.0;

enum Preconditioner {
    Jacobi(Vec<f64>),
    Spectral(Box<SpectralPreconditioner>),
}

impl Preconditioner {
    fn new(grid: RcGrid, psi: &[f64]) -> Self {
        let lo = psi.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = psi.iter().cloned().fold(0.0, f64::max);
        if hi <= SPECTRAL_MAX_CONTRAST * lo {
            return Preconditioner::Spectral(Box::new(SpectralPreconditioner::new(grid, psi)));
        }
        let (n1, n2) = (grid.n1(), grid.n2());
        let c1 = 0.25 / (grid.h1() * grid.h1());
        let c2 = 0.25 / (grid.h2() * grid.h2());
        let mut inv_diag = Vec::with_capacity(grid.len());
        for j in 0..n2 {
            for i in 0..n1 {
                let l = psi[grid.index((i + n1 - 1) % n1, j)];
                let r = psi[grid.index((i + 1) % n1, j)];
                let d = psi[grid.index(i, (j + n2 - 1) % n2)];
                let u = psi[grid.index(i, (j + 1) % n2)];
                inv_diag.push(1.0 / (c1 * (l + r) + c2 * (d + u)));
            }
        }
        Preconditioner::Jacobi(inv_diag)
    }
}

/// `ψ^{-1/2} (GᵀG)⁺ ψ^{-1/2}` with the unweighted operator inverted by FFT.
///
/// Exact (up to the kernel) for uniform `ψ`, which is where a flat-histogram
/// run ends up; the diagonal scaling takes care of slowly varying weights.
/// Kernel frequencies get the largest eigenvalue instead of zero so the
/// preconditioner stays positive definite.
struct SpectralPreconditioner {
    n1: usize,
    n2: usize,
    inv_sqrt_psi: Vec<f64>,
    inv_lambda: Vec<f64>,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    buf: std::cell::RefCell<FftBuffers>,
}

type FftBuffers = (Vec<Complex<f64>>, Vec<Complex<f64>>);

impl SpectralPreconditioner {
    fn new(grid: RcGrid, psi: &[f64]) -> Self {
        let (n1, n2) = (grid.n1(), grid.n2());
        let mut planner = FftPlanner::new();
        let tau = 2.0 * std::f64::consts::PI;
        let s1: Vec<f64> = (0..n1)
            .map(|k| ((tau * k as f64 / n1 as f64).sin() / grid.h1()).powi(2))
            .collect();
        let s2: Vec<f64> = (0..n2)
            .map(|k| ((tau * k as f64 / n2 as f64).sin() / grid.h2()).powi(2))
            .collect();
        // spectrum laid out transposed (axis 2 fastest), matching `apply`
        let mut lambda: Vec<f64> = s1
            .iter()
            .flat_map(|a| s2.iter().map(move |b| a + b))
            .collect();
        let lmax = lambda.iter().cloned().fold(0.0, f64::max);
        let cut = 1e-12 * lmax;
        lambda.iter_mut().for_each(|l| {
            if *l <= cut {
                *l = lmax
            }
        });
        let norm = 1.0 / grid.len() as f64;
        Self {
            n1,
            n2,
            inv_sqrt_psi: psi.iter().map(|p| p.sqrt().recip()).collect(),
            inv_lambda: lambda.iter().map(|l| norm / l).collect(),
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
            buf: std::cell::RefCell::new((
                vec![Complex::default(); grid.len()],
                vec![Complex::default(); grid.len()],
            )),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (n1, n2) = (self.n1, self.n2);
        let mut b = self.buf.borrow_mut();
        let (a, t) = &mut *b;
        for (k, c) in a.iter_mut().enumerate() {
            *c = Complex::new(r[k] * self.inv_sqrt_psi[k], 0.0);
        }
        // rows of length n1 are contiguous in storage order
        self.fwd1.process(a);
        transpose(a, t, n1, n2);
        self.fwd2.process(t);
        for (c, w) in t.iter_mut().zip(&self.inv_lambda) {
            *c *= *w;
        }
        self.inv2.process(t);
        transpose(t, a, n2, n1);
        self.inv1.process(a);
        for (k, c) in a.iter().enumerate() {
            z[k] = c.re * self.inv_sqrt_psi[k];
        }
    }
}

/// `dst[i·rows + j] = src[i + cols·j]` for a `rows × cols` block stored with `cols` fastest.
fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], cols: usize, rows: usize) {
    for j in 0..rows {
        for i in 0..cols {
            dst[i * rows + j] = src[i + cols * j];
        }
    }
}

/// Orthonormal basis of the kernel of the centered gradient.
fn kernel_basis(grid: &RcGrid) -> Vec<Vec<f64>> {
    let (n1, n2) = (grid.n1(), grid.n2());
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut modes: Vec<Box<dyn Fn(usize, usize) -> f64>> = vec![Box::new(|_, _| 1.0)];
    if n1 % 2 == 0 {
        modes.push(Box::new(move |i, _| sign(i)));
    }
    if n2 % 2 == 0 {
        modes.push(Box::new(move |_, j| sign(j)));
    }
    if n1 % 2 == 0 && n2 % 2 == 0 {
        modes.push(Box::new(move |i, j| sign(i + j)));
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    modes
        .iter()
        .map(|m| {
            (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.unravel(k);
                    m(i, j) * scale
                })
                .collect()
        })
        .collect()
}
