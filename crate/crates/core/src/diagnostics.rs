//! Cross-run variances, free-energy error and histogram flatness.

use crate::error::{Error, Result};
use crate::grid::{integrate, ScalarField, VectorField};

fn check_runs(fields: &[VectorField]) -> Result<()> {
    if fields.len() < 2 {
        return Err(Error::InsufficientReplication(fields.len()));
    }
    for f in &fields[1..] {
        fields[0].grid().check_same(f.grid())?;
    }
    Ok(())
}

/// Per-bin unbiased sample variance across runs, summed over the two
/// components: `Var(F¹) + Var(F²)`.
pub fn variance_field(fields: &[VectorField]) -> Result<ScalarField> {
    check_runs(fields)?;
    let grid = *fields[0].grid();
    let r = fields.len() as f64;
    let mut out = vec![0.0; grid.len()];
    for (k, o) in out.iter_mut().enumerate() {
        for comp in [
            VectorField::comp1 as fn(&VectorField) -> &[f64],
            VectorField::comp2,
        ] {
            // shifted by the first run so identical runs give exactly zero
            let x0 = comp(&fields[0])[k];
            let mean = fields.iter().map(|f| comp(f)[k] - x0).sum::<f64>() / r;
            *o += fields
                .iter()
                .map(|f| (comp(f)[k] - x0 - mean).powi(2))
                .sum::<f64>()
                / (r - 1.0);
        }
    }
    ScalarField::new(grid, out)
}

/// `∫ (Var(F¹) + Var(F²))` across independent runs.
pub fn integrated_variance(fields: &[VectorField]) -> Result<f64> {
    Ok(integrate(&variance_field(fields)?))
}

/// `∫ Var(|F|)`: variance of the Euclidean norm across runs, the alternative
/// scalar statistic.
pub fn integrated_norm_variance(fields: &[VectorField]) -> Result<f64> {
    check_runs(fields)?;
    let grid = *fields[0].grid();
    let r = fields.len() as f64;
    let mut out = vec![0.0; grid.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let norms: Vec<f64> = fields
            .iter()
            .map(|f| f.comp1()[k].hypot(f.comp2()[k]))
            .collect();
        let mean = norms.iter().sum::<f64>() / r;
        *o = norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / (r - 1.0);
    }
    Ok(integrate(&ScalarField::new(grid, out)?))
}

/// Integrated variance with its leave-one-out jackknife standard error.
pub fn integrated_variance_with_error(fields: &[VectorField]) -> Result<(f64, f64)> {
    jackknife(fields, integrated_variance)
}

/// [`integrated_norm_variance`] with its jackknife standard error.
pub fn integrated_norm_variance_with_error(fields: &[VectorField]) -> Result<(f64, f64)> {
    jackknife(fields, integrated_norm_variance)
}

/// `stat` over all runs and the leave-one-out jackknife standard error of it.
/// The error is NaN with fewer than three runs.
pub fn jackknife(
    fields: &[VectorField],
    stat: impl Fn(&[VectorField]) -> Result<f64>,
) -> Result<(f64, f64)> {
    let value = stat(fields)?;
    let r = fields.len();
    if r < 3 {
        return Ok((value, f64::NAN));
    }
    let loo: Vec<f64> = (0..r)
        .map(|skip| {
            let subset: Vec<VectorField> = fields
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, f)| f.clone())
                .collect();
            stat(&subset)
        })
        .collect::<Result<_>>()?;
    let mean = loo.iter().sum::<f64>() / r as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (r - 1) as f64 / r as f64;
    Ok((value, var.sqrt()))
}

/// Normalized L2 distance between two free energies after removing their means.
pub fn l2_error(estimate: &ScalarField, reference: &ScalarField) -> Result<f64> {
    estimate.grid().check_same(reference.grid())?;
    let e = estimate.mean_zero();
    let r = reference.mean_zero();
    let denom = integrate(&r.map(|v| v * v));
    if denom <= 0.0 {
        return Err(Error::DegenerateReference);
    }
    let num = integrate(&e.zip_with(&r, |a, b| (a - b).powi(2))?);
    Ok((num / denom).sqrt())
}

/// Marginals `(∫ψ dz2, ∫ψ dz1)` sampled at the nodes of each axis.
pub fn marginals(psi: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = psi.grid();
    let (h1, h2) = (g.h1(), g.h2());
    let mut m1 = vec![0.0; g.n1()];
    let mut m2 = vec![0.0; g.n2()];
    for (k, v) in psi.values().iter().enumerate() {
        let (i, j) = g.unravel(k);
        m1[i] += h2 * v;
        m2[j] += h1 * v;
    }
    (m1, m2)
}

/// Population variance of a marginal about its mean; zero iff uniform.
pub fn flatness(m: &[f64]) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RcGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn g() -> RcGrid {
        RcGrid::new(8, 6, 2.0, 1.5).unwrap()
    }

    #[test]
    fn identical_runs_have_zero_variance() {
        let f = VectorField::from_fn(g(), |a, b| (a.sin(), b * b));
        assert_eq!(
            integrated_variance(&[f.clone(), f.clone(), f]).unwrap(),
            0.0
        );
    }

    #[test]
    fn shifted_pair_variance() {
        let f = VectorField::from_fn(g(), |a, b| (a, b));
        let c = 0.7;
        let shifted = f
            .axpby(1.0, &VectorField::constant(g(), (c, 0.0)), 1.0)
            .unwrap();
        let v = integrated_variance(&[f, shifted]).unwrap();
        assert!((v - c * c / 2.0 * g().area()).abs() < 1e-12);
    }

    #[test]
    fn too_few_runs() {
        let f = VectorField::zeros(g());
        assert!(matches!(
            integrated_variance(&[f]),
            Err(Error::InsufficientReplication(1))
        ));
    }

    #[test]
    fn gaussian_fields_match_expected_variance() {
        let grid = RcGrid::unit(16, 16).unwrap();
        let s = 0.5;
        let normal = Normal::new(0.0, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let runs: Vec<VectorField> = (0..16)
            .map(|_| {
                VectorField::from_fn(grid, |_, _| {
                    (normal.sample(&mut rng), normal.sample(&mut rng))
                })
            })
            .collect();
        let (v, se) = integrated_variance_with_error(&runs).unwrap();
        let expect = 2.0 * s * s * grid.area();
        // Var of a sample variance with 15 dof is 2σ⁴/15 per component per bin
        let analytic_se = (2.0 * 2.0 * s.powi(4) / 15.0 / grid.len() as f64).sqrt() * grid.area();
        assert!((v - expect).abs() < 3.0 * analytic_se, "{v} vs {expect}");
        assert!(
            se > 0.3 * analytic_se && se < 3.0 * analytic_se,
            "{se} vs {analytic_se}"
        );
    }

    #[test]
    fn l2_error_examples() {
        let grid = g();
        let a = ScalarField::from_fn(grid, |z1, z2| (z1 * 3.0).sin() + z2).mean_zero();
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        assert!(l2_error(&a.map(|v| v + 4.0), &a).unwrap() < 1e-14);
        assert!((l2_error(&a.scaled(2.0), &a).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            l2_error(&a, &ScalarField::constant(grid, 3.0)),
            Err(Error::DegenerateReference)
        ));
    }

    #[test]
    fn marginal_examples() {
        let grid = RcGrid::unit(8, 8).unwrap();
        let (m1, m2) = marginals(&ScalarField::constant(grid, 1.0));
        assert!(m1.iter().chain(&m2).all(|v| (v - 1.0).abs() < 1e-15));

        let mut psi = ScalarField::zeros(grid);
        psi.values_mut()[grid.index(3, 5)] = 64.0;
        let (m1, m2) = marginals(&psi);
        assert_eq!(m1[3], 8.0);
        assert_eq!(m2[5], 8.0);
        assert!((m1.iter().sum::<f64>() * grid.h1() - 1.0).abs() < 1e-15);

        let gz = |z: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * z).cos();
        let (m1, _) = marginals(&ScalarField::from_fn(grid, |a, b| gz(a) * gz(b)));
        for (i, v) in m1.iter().enumerate() {
            assert!((v - gz(grid.node(i, 0).0)).abs() < 1e-14);
        }
    }

    #[test]
    fn flatness_examples() {
        assert_eq!(flatness(&[1.0; 10]), 0.0);
        assert_eq!(flatness(&[2.0, 0.0]), 1.0);
        let m = [3.0, 1.0, 0.0, 0.0];
        let avg: Vec<f64> = m.iter().map(|v| 0.5 * (v + 1.0)).collect();
        assert!(flatness(&avg) < flatness(&m));
    }
}
