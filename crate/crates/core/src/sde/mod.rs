//! Stiff SDEs `dY = (−AY + μ(t,Y))dt + σ(t,Y)dB` and their linear-implicit
//! Euler discretization
//!
//! `Y_{n+1} = (I+hA)^{-1}(Y_n + hμ(t_n,Y_n) + σ(t_n,Y_n)ΔB_{n+1})`,
//!
//! started from `Y_0 = (I+hA)^{-1}x₀`.

mod coeffs;
mod implicit;
mod ou;
mod rng;
mod scheme;
pub mod stats;
mod studies;
mod validate;

pub use coeffs::{Coefficients, FnCoefficients, NetCoefficients, Perturbed};
pub use implicit::ImplicitFactor;
pub use ou::{ou_covariance, ou_exact_value};
pub use rng::PathBundle;
pub use scheme::{simulate, simulate_driven, simulate_path, step_pes, EulerConfig, Stepper};
pub use studies::{
    coupled_gap_check, moment_check, strong_rate_study, weak_rate_study, GapReport, MomentReport,
    RateRow, StrongRateReport, WeakRateReport, WeakReference, REFERENCE_REFINE,
};
pub use validate::{validate_system, ValidationReport};

use nalgebra::DMatrix;
use std::sync::Arc;

/// Constants of the monotonicity and regularity hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConstants {
    pub beta: f64,
    pub eta: f64,
    pub kappa0: f64,
    /// `sup_t ‖μ(t,0)‖`
    pub mu0: f64,
    /// Lipschitz / half-Hölder constant of `μ`
    pub mu1: f64,
    /// `sup_t ‖σ(t,0)‖_F`
    pub sigma0: f64,
    pub sigma1: f64,
}

#[derive(Clone)]
pub struct StiffSystem {
    pub d: usize,
    pub a: DMatrix<f64>,
    pub coeffs: Arc<dyn Coefficients>,
    pub consts: SystemConstants,
}

impl std::fmt::Debug for StiffSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StiffSystem")
            .field("d", &self.d)
            .field("consts", &self.consts)
            .finish_non_exhaustive()
    }
}

impl StiffSystem {
    pub fn op_norm_a(&self) -> f64 {
        op_norm(&self.a)
    }

    /// `α_p` of the moment estimate, for `p ∈ [2, 2+η)`.
    pub fn alpha_p(&self, p: f64) -> f64 {
        let c = &self.consts;
        let denom = c.eta + 2.0 - p;
        (0.5 + c.eta * (p - 2.0) / denom) * c.mu0 * c.mu0
            + (1.0 + c.eta) * (p - 1.0) / (2.0 * denom) * c.sigma0 * c.sigma0
    }

    /// Bound on `E‖Y_t‖^p` for the exact solution.
    pub fn moment_bound(&self, x0_norm: f64, p: f64, t_end: f64) -> f64 {
        2f64.powf((p - 2.0) / 2.0)
            * (self.alpha_p(p) + x0_norm.powf(p))
            * (p * (self.consts.beta + 0.5) * t_end).exp()
    }

    /// Discrete second-moment bound of the exact-coefficient scheme.
    pub fn scheme_moment_bound(&self, x0_norm: f64, t_end: f64) -> f64 {
        let c = &self.consts;
        let alpha1 = (1.0 + c.eta).powi(2) * (c.mu0 * c.mu0 + c.sigma0 * c.sigma0) / c.eta;
        3.0 * ((2.0 * c.beta + 1.0) * t_end).exp() * (x0_norm * x0_norm + alpha1 * t_end)
    }

    /// Discrete second-moment bound of the perturbed scheme at level `gamma`.
    pub fn perturbed_scheme_moment_bound(&self, x0_norm: f64, t_end: f64, gamma: f64) -> f64 {
        let c = &self.consts;
        let alpha2 =
            2.0 * (1.0 + c.eta).powi(2) * (c.mu0 * c.mu0 + c.sigma0 * c.sigma0 + gamma * gamma)
                / c.eta;
        3.0 * (2.0 * (c.beta + 1.0) * t_end).exp() * (x0_norm * x0_norm + alpha2 * t_end)
    }

    /// Bound on the gap between exact- and perturbed-coefficient schemes.
    pub fn gap_bound(&self, t_end: f64, gamma: f64) -> f64 {
        let c = &self.consts;
        ((2.0 * c.beta + 1.0) * t_end).exp() * t_end * (1.0 + c.eta) * gamma * gamma / c.eta
    }

    /// Smallest step count admitted by the strong-rate theorem.
    pub fn rate_step_floor(&self, t_end: f64) -> f64 {
        let c = &self.consts;
        let q = 2f64.powf(1.0 / t_end);
        t_end
            * ((2.0 * c.beta + q) / (q - 1.0))
                .max(1.0 / c.eta)
                .max(2.0 * c.eta)
    }
}

pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}
