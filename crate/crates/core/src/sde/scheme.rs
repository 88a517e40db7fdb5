use super::{Coefficients, ImplicitFactor, PathBundle};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerConfig {
    pub t_end: f64,
    pub n_steps: usize,
}

impl EulerConfig {
    pub fn new(t_end: f64, n_steps: usize) -> Self {
        assert!(n_steps >= 1 && t_end > 0.0, "need T > 0 and N >= 1");
        EulerConfig { t_end, n_steps }
    }

    pub fn h(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h()
    }
}

/// One linear-implicit step with reusable scratch space.
pub struct Stepper<'a> {
    factor: &'a ImplicitFactor,
    coeffs: &'a dyn Coefficients,
    mu: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(factor: &'a ImplicitFactor, coeffs: &'a dyn Coefficients) -> Self {
        let d = coeffs.dim();
        assert_eq!(factor.dim(), d, "factor and coefficients disagree on d");
        Stepper {
            factor,
            coeffs,
            mu: vec![0.0; d],
            noise: vec![0.0; d],
        }
    }

    /// `y ← (I+hA)^{-1}(y + hμ(t,y) + σ(t,y)Δb)`.
    pub fn step(&mut self, y: &mut DVector<f64>, t: f64, db: &[f64]) -> Result<()> {
        let h = self.factor.h();
        self.coeffs.drift(t, y.as_slice(), &mut self.mu);
        self.coeffs
            .diffusion_apply(t, y.as_slice(), db, &mut self.noise);
        for ((v, m), s) in y.iter_mut().zip(&self.mu).zip(&self.noise) {
            *v += h * m + s;
        }
        self.factor.solve_in_place(y);
        if y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("scheme blew up at t = {t}")))
        }
    }
}

pub fn step_pes(
    factor: &ImplicitFactor,
    coeffs: &dyn Coefficients,
    y: &[f64],
    t: f64,
    db: &[f64],
) -> Result<Vec<f64>> {
    let mut v = DVector::from_column_slice(y);
    Stepper::new(factor, coeffs).step(&mut v, t, db)?;
    Ok(v.as_slice().to_vec())
}

/// Runs path `m` from `x0`, calling `observe(n, Y_n)` for `n = 0..=N`.
///
/// With `refine > 1` each increment is the sum of `refine` increments of the
/// finer grid, so coarse and fine runs share one Brownian path.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    factor: &ImplicitFactor,
    coeffs: &dyn Coefficients,
    x0: &[f64],
    cfg: &EulerConfig,
    paths: &PathBundle,
    m: usize,
    refine: usize,
    observe: impl FnMut(usize, &DVector<f64>),
) -> Result<DVector<f64>> {
    let h = cfg.h();
    let incr = |n: usize, db: &mut [f64]| {
        if refine == 1 {
            paths.increment(m, n, h, db);
        } else {
            paths.coarse_increment(m, n, refine, h / refine as f64, db);
        }
    };
    simulate_driven(factor, coeffs, x0, cfg, incr, observe)
}

/// Runs the scheme with increments supplied by `incr(n, ΔB_{n+1})`.
pub fn simulate_driven(
    factor: &ImplicitFactor,
    coeffs: &dyn Coefficients,
    x0: &[f64],
    cfg: &EulerConfig,
    mut incr: impl FnMut(usize, &mut [f64]),
    mut observe: impl FnMut(usize, &DVector<f64>),
) -> Result<DVector<f64>> {
    let d = x0.len();
    let mut stepper = Stepper::new(factor, coeffs);
    let mut y = DVector::from_column_slice(x0);
    factor.solve_in_place(&mut y);
    observe(0, &y);
    let mut db = vec![0.0; d];
    for n in 0..cfg.n_steps {
        incr(n, &mut db);
        stepper.step(&mut y, cfg.time(n), &db)?;
        observe(n + 1, &y);
    }
    Ok(y)
}

/// Endpoints `Y^m_N` of all paths, one per row.
pub fn simulate(
    a: &DMatrix<f64>,
    coeffs: &dyn Coefficients,
    x0: &[f64],
    cfg: &EulerConfig,
    paths: &PathBundle,
) -> Result<DMatrix<f64>> {
    let d = x0.len();
    if a.nrows() != d || coeffs.dim() != d || paths.d != d {
        return Err(Error::Shape(format!(
            "x0 has length {d}, A is {}x{}, paths carry {}",
            a.nrows(),
            a.ncols(),
            paths.d
        )));
    }
    let factor = ImplicitFactor::new(a, cfg.h())?;
    let ends: Vec<DVector<f64>> = (0..paths.paths)
        .into_par_iter()
        .map(|m| simulate_path(&factor, coeffs, x0, cfg, paths, m, 1, |_, _| {}))
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(paths.paths, d);
    for (m, y) in ends.iter().enumerate() {
        out.row_mut(m).copy_from(&y.transpose());
    }
    Ok(out)
}
