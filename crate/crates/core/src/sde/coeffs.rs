use crate::nn::Network;
use nalgebra::DMatrix;
use std::sync::Arc;

/// Drift and diffusion of an SDE on `R^d`.
pub trait Coefficients: Send + Sync {
    fn dim(&self) -> usize;

    /// `out = μ(t, x)`
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `out = σ(t, x) b`
    fn diffusion_apply(&self, t: f64, x: &[f64], b: &[f64], out: &mut [f64]);

    fn diffusion_matrix(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.diffusion_apply(t, x, &e, &mut col);
            e[j] = 0.0;
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// `Some(σ₀)` when the diffusion is a constant matrix.
    fn constant_diffusion(&self) -> Option<DMatrix<f64>> {
        None
    }

    fn drift_is_zero(&self) -> bool {
        false
    }
}

type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type DiffusionFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Coefficients given by closures.
pub struct FnCoefficients {
    pub d: usize,
    pub drift: Box<DriftFn>,
    pub diffusion: Box<DiffusionFn>,
    pub constant_sigma: Option<DMatrix<f64>>,
    pub zero_drift: bool,
}

impl Coefficients for FnCoefficients {
    fn dim(&self) -> usize {
        self.d
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion_apply(&self, t: f64, x: &[f64], b: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, b, out)
    }

    fn constant_diffusion(&self) -> Option<DMatrix<f64>> {
        self.constant_sigma.clone()
    }

    fn drift_is_zero(&self) -> bool {
        self.zero_drift
    }
}

/// Coefficients realized by networks on the time-augmented input `(t, x)`.
///
/// `sigma_cols[j]` realizes the `j`-th column of `σ`.
#[derive(Clone, Debug)]
pub struct NetCoefficients {
    pub mu_net: Network,
    pub sigma_cols: Vec<Network>,
}

impl NetCoefficients {
    fn input(t: f64, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + 1);
        v.push(t);
        v.extend_from_slice(x);
        v
    }
}

impl Coefficients for NetCoefficients {
    fn dim(&self) -> usize {
        self.mu_net.dim_out()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.mu_net.eval(&Self::input(t, x)));
    }

    fn diffusion_apply(&self, t: f64, x: &[f64], b: &[f64], out: &mut [f64]) {
        let input = Self::input(t, x);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (col, &bj) in self.sigma_cols.iter().zip(b) {
            if bj == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(col.eval(&input)) {
                *o += c * bj;
            }
        }
    }
}

/// Exact coefficients plus a constant offset of total size `γ`:
/// `μ̃ = μ + (1−f)γ·1/√d`, `σ̃ = σ + fγ·I/√d`.
#[derive(Clone)]
pub struct Perturbed {
    pub base: Arc<dyn Coefficients>,
    pub gamma: f64,
    mu_shift: Vec<f64>,
    sigma_shift: f64,
}

impl Perturbed {
    pub fn new(base: Arc<dyn Coefficients>, gamma: f64, sigma_fraction: f64) -> Self {
        let d = base.dim();
        let unit = 1.0 / (d as f64).sqrt();
        Perturbed {
            base,
            gamma,
            mu_shift: vec![(1.0 - sigma_fraction) * gamma * unit; d],
            sigma_shift: sigma_fraction * gamma * unit,
        }
    }

    /// `‖μ̃ − μ‖ + ‖σ̃ − σ‖_F`.
    pub fn distance(&self) -> f64 {
        super::norm2(&self.mu_shift).sqrt()
            + self.sigma_shift.abs() * (self.base.dim() as f64).sqrt()
    }
}

impl Coefficients for Perturbed {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.drift(t, x, out);
        for (o, s) in out.iter_mut().zip(&self.mu_shift) {
            *o += s;
        }
    }

    fn diffusion_apply(&self, t: f64, x: &[f64], b: &[f64], out: &mut [f64]) {
        self.base.diffusion_apply(t, x, b, out);
        for (o, bj) in out.iter_mut().zip(b) {
            *o += self.sigma_shift * bj;
        }
    }

    fn constant_diffusion(&self) -> Option<DMatrix<f64>> {
        self.base
            .constant_diffusion()
            .map(|s| s + DMatrix::identity(self.dim(), self.dim()) * self.sigma_shift)
    }
}
