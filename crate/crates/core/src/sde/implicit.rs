use crate::error::{Error, Result};
use crate::nn::Matrix;
use nalgebra::{DMatrix, DVector, Dyn, LU};

/// LU factorization of `I + hA`, reused for every step and path.
#[derive(Clone, Debug)]
pub struct ImplicitFactor {
    h: f64,
    lu: LU<f64, Dyn, Dyn>,
    inverse: DMatrix<f64>,
}

impl ImplicitFactor {
    /// Factors `I + hA` and checks `‖(I+hA)^{-1}r‖ ≤ ‖r‖` on a few probes.
    pub fn new(a: &DMatrix<f64>, h: f64) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(Error::Shape(format!(
                "A must be square, got {}x{}",
                d,
                a.ncols()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Param(format!("step size must be positive, got {h}")));
        }
        let m = DMatrix::identity(d, d) + a * h;
        let lu = m.lu();
        let inverse = lu
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular(format!("I + hA is singular for h = {h}")))?;
        let factor = ImplicitFactor { h, lu, inverse };
        for j in 0..d.min(8) {
            let mut r = DVector::from_fn(d, |i, _| ((i * 7 + j * 13) % 11) as f64 - 5.0);
            r[j] += 1.0;
            let norm_r = r.norm();
            let z = factor.solve(r.as_slice());
            let z = DVector::from_vec(z);
            // hA(I+hA)^{-1}r = r − z
            let rest = (&r - &z).norm();
            if z.norm() > norm_r * (1.0 + 1e-12) || rest > norm_r * (1.0 + 1e-12) {
                return Err(Error::Hypothesis(format!(
                    "‖(I+hA)^{{-1}}r‖ = {}, ‖hA(I+hA)^{{-1}}r‖ = {rest}, ‖r‖ = {norm_r}; A is not monotone",
                    z.norm()
                )));
            }
        }
        Ok(factor)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    /// Overwrites `r` with the solution `z` of `(I + hA)z = r`.
    pub fn solve_in_place(&self, r: &mut DVector<f64>) {
        let ok = self.lu.solve_mut(r);
        debug_assert!(ok);
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut v = DVector::from_column_slice(r);
        self.solve_in_place(&mut v);
        v.as_slice().to_vec()
    }

    /// Explicit `(I + hA)^{-1}`, for folding into network layers.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn inverse_matrix(&self) -> Matrix {
        Matrix::from_dmatrix(&self.inverse)
    }
}
