//! Test systems with exactly representable coefficients, and quadratic costs.
//!
//! Every recipe here has coefficients of the form
//! `μ_i = p·ϱ(x_i) + q·ϱ(−x_i) + τ·t + (Bu)_i` and
//! `σ = diag(p_σ·ϱ(x_j) + q_σ·ϱ(−x_j)) + s₀·I`,
//! which one hidden layer of ReLUs reproduces without error.

use crate::calculus::{weighted_square_net, TruncatedSquare};
use crate::error::{param, Error, Result};
use crate::nn::{relu, Layer, Matrix, Network};
use crate::sde::{validate_system, Coefficients, StiffSystem, SystemConstants, ValidationReport};
use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::sync::Arc;

/// Number of sampled pairs used to validate a recipe at construction.
pub const VALIDATION_TRIALS: usize = 1000;
const VALIDATION_RADIUS: f64 = 2.0;

/// Elementwise piecewise-linear coefficients with an optional linear control term.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalRelu {
    pub d: usize,
    pub mu_pos: f64,
    pub mu_neg: f64,
    pub mu_time: f64,
    pub sig_pos: f64,
    pub sig_neg: f64,
    pub sig_const: f64,
    /// `d × m` control matrix; `m = 0` for uncontrolled systems.
    pub control: DMatrix<f64>,
}

impl DiagonalRelu {
    pub fn new(d: usize) -> Self {
        DiagonalRelu {
            d,
            mu_pos: 0.0,
            mu_neg: 0.0,
            mu_time: 0.0,
            sig_pos: 0.0,
            sig_neg: 0.0,
            sig_const: 0.0,
            control: DMatrix::zeros(d, 0),
        }
    }

    pub fn control_dim(&self) -> usize {
        self.control.ncols()
    }

    pub fn drift_u(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.mu_pos * relu(x[i]) + self.mu_neg * relu(-x[i]) + self.mu_time * t;
            for (k, uk) in u.iter().enumerate() {
                v += self.control[(i, k)] * uk;
            }
            *o = v;
        }
    }

    fn sigma_diag(&self, v: f64) -> f64 {
        self.sig_pos * relu(v) + self.sig_neg * relu(-v) + self.sig_const
    }

    /// Lipschitz constant of the elementwise drift in `x`.
    pub fn mu_lipschitz(&self) -> f64 {
        self.mu_pos.abs().max(self.mu_neg.abs())
    }

    pub fn sigma_lipschitz(&self) -> f64 {
        self.sig_pos.abs().max(self.sig_neg.abs())
    }

    /// `β = ℓ⁺ + ηL_μ² + (1+η)L_σ²/2`, where `ℓ⁺` bounds the increasing slope.
    pub fn beta(&self, eta: f64) -> f64 {
        let up = self.mu_pos.max(-self.mu_neg).max(0.0);
        up + eta * self.mu_lipschitz().powi(2) + (1.0 + eta) / 2.0 * self.sigma_lipschitz().powi(2)
    }

    /// Network on `(t, x, u)` with hidden units
    /// `(ϱ(x), ϱ(−x), ϱ(t), ϱ(u), ϱ(−u))`, and an output layer given by
    /// `out(i, unit)` plus `bias`.
    fn net(&self, out: impl Fn(usize) -> Vec<(usize, f64)>, bias: Vec<f64>) -> Network {
        let (d, m) = (self.d, self.control_dim());
        let n_in = 1 + d + m;
        let hidden = 2 * d + 1 + 2 * m;
        let mut first = Vec::with_capacity(hidden);
        for i in 0..d {
            first.push((i, 1 + i, 1.0));
            first.push((d + i, 1 + i, -1.0));
        }
        first.push((2 * d, 0, 1.0));
        for k in 0..m {
            first.push((2 * d + 1 + k, 1 + d + k, 1.0));
            first.push((2 * d + 1 + m + k, 1 + d + k, -1.0));
        }
        let l1 = Layer::new(
            Matrix::from_triplets(hidden, n_in, first),
            vec![0.0; hidden],
        )
        .unwrap();
        let mut t = Vec::new();
        for i in 0..d {
            t.extend(out(i).into_iter().map(|(j, v)| (i, j, v)));
        }
        let l2 = Layer::new(Matrix::from_triplets(d, hidden, t), bias).unwrap();
        Network::new(vec![l1, l2]).unwrap()
    }

    /// Exact networks for `μ` and the columns of `σ`, all of one architecture.
    pub fn networks(&self) -> (Network, Vec<Network>) {
        let (d, m) = (self.d, self.control_dim());
        let mu = self.net(
            |i| {
                let mut row = vec![
                    (i, self.mu_pos),
                    (d + i, self.mu_neg),
                    (2 * d, self.mu_time),
                ];
                for k in 0..m {
                    row.push((2 * d + 1 + k, self.control[(i, k)]));
                    row.push((2 * d + 1 + m + k, -self.control[(i, k)]));
                }
                row
            },
            vec![0.0; d],
        );
        let cols = (0..d)
            .map(|j| {
                let mut bias = vec![0.0; d];
                bias[j] = self.sig_const;
                self.net(
                    |i| {
                        if i == j {
                            vec![(j, self.sig_pos), (d + j, self.sig_neg)]
                        } else {
                            vec![]
                        }
                    },
                    bias,
                )
            })
            .collect();
        (mu, cols)
    }
}

impl Coefficients for DiagonalRelu {
    fn dim(&self) -> usize {
        self.d
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.drift_u(t, x, &[], out)
    }

    fn diffusion_apply(&self, _t: f64, x: &[f64], b: &[f64], out: &mut [f64]) {
        for ((o, &xj), bj) in out.iter_mut().zip(x).zip(b) {
            *o = self.sigma_diag(xj) * bj;
        }
    }

    fn constant_diffusion(&self) -> Option<DMatrix<f64>> {
        (self.sig_pos == 0.0 && self.sig_neg == 0.0)
            .then(|| DMatrix::identity(self.d, self.d) * self.sig_const)
    }

    fn drift_is_zero(&self) -> bool {
        self.mu_pos == 0.0 && self.mu_neg == 0.0 && self.mu_time == 0.0
    }
}

/// A validated system together with exact coefficient networks.
#[derive(Clone, Debug)]
pub struct SystemRecipe {
    pub id: String,
    pub system: StiffSystem,
    pub coeffs: DiagonalRelu,
    pub mu_net: Network,
    pub sigma_cols: Vec<Network>,
    /// Declared sup-distance between the networks and the coefficients.
    pub gamma: f64,
    pub validation: ValidationReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

/// Recipe parameters, addressable by id.
#[derive(Clone, Debug, PartialEq)]
pub enum RecipeSpec {
    GalerkinHeat {
        d: usize,
        a: f64,
        c: f64,
        s: f64,
        noise: NoiseKind,
        eta: f64,
    },
    ReluDrift {
        d: usize,
        l_mu: f64,
        eta: f64,
        s: f64,
    },
    Ou {
        d: usize,
        a: f64,
        s: f64,
        r: f64,
        eta: f64,
    },
}

pub const SYSTEM_IDS: [&str; 5] = [
    "galerkin_heat",
    "galerkin_heat_mult",
    "relu_drift",
    "ou",
    "ou_mult",
];

impl RecipeSpec {
    /// Default parameters for a registry id.
    pub fn by_id(id: &str, d: usize) -> Result<Self> {
        Ok(match id {
            "galerkin_heat" => RecipeSpec::GalerkinHeat {
                d,
                a: 1.0,
                c: 0.5,
                s: 0.3,
                noise: NoiseKind::Additive,
                eta: 0.5,
            },
            "galerkin_heat_mult" => RecipeSpec::GalerkinHeat {
                d,
                a: 0.1,
                c: 0.5,
                s: 0.8,
                noise: NoiseKind::Multiplicative,
                eta: 0.5,
            },
            "relu_drift" => RecipeSpec::ReluDrift {
                d,
                l_mu: 1.0,
                eta: 0.5,
                s: 0.2,
            },
            "ou" => RecipeSpec::Ou {
                d,
                a: 1.0,
                s: 1.0,
                r: 0.0,
                eta: 0.5,
            },
            "ou_mult" => RecipeSpec::Ou {
                d,
                a: 1.0,
                s: 1.0,
                r: 1.0,
                eta: 0.5,
            },
            other => {
                return Err(param(format!(
                    "unknown system id {other:?}; known ids: {}",
                    SYSTEM_IDS.join(", ")
                )))
            }
        })
    }

    pub fn build(&self) -> Result<SystemRecipe> {
        match *self {
            RecipeSpec::GalerkinHeat {
                d,
                a,
                c,
                s,
                noise,
                eta,
            } => make_galerkin_heat(d, a, c, s, noise, eta),
            RecipeSpec::ReluDrift { d, l_mu, eta, s } => make_relu_drift_system(d, l_mu, eta, s),
            RecipeSpec::Ou { d, a, s, r, eta } => make_ou(d, a, s, r, eta),
        }
    }
}

fn check_common(d: usize, eta: f64) -> Result<()> {
    if d == 0 {
        return Err(param("dimension must be at least 1"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(param(format!("η must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

/// Smallest `κ₀ ∈ {1, 1.25, 1.5, …}` with `κ₀d^{κ₀}` above every value.
fn kappa0_cover(d: usize, values: &[f64]) -> f64 {
    let need = values.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut k = 1.0;
    while k * (d as f64).powf(k) < need {
        k += 0.25;
    }
    k
}

fn finish(
    id: String,
    a: DMatrix<f64>,
    coeffs: DiagonalRelu,
    eta: f64,
    kappa0: f64,
    t_end: f64,
) -> Result<SystemRecipe> {
    let d = coeffs.d;
    let sqrt_d = (d as f64).sqrt();
    let consts = SystemConstants {
        beta: coeffs.beta(eta),
        eta,
        kappa0,
        mu0: coeffs.mu_time.abs() * t_end * sqrt_d,
        mu1: coeffs
            .mu_lipschitz()
            .max(coeffs.mu_time.abs() * (d as f64 * t_end).sqrt()),
        sigma0: coeffs.sig_const.abs() * sqrt_d,
        sigma1: coeffs.sigma_lipschitz(),
    };
    let (mu_net, sigma_cols) = coeffs.networks();
    let system = StiffSystem {
        d,
        a,
        coeffs: Arc::new(coeffs.clone()),
        consts,
    };
    let validation = validate_system(&system, VALIDATION_TRIALS, t_end, VALIDATION_RADIUS, 0x5eed);
    if !validation.passed() {
        return Err(Error::Hypothesis(format!(
            "{id}: {}",
            validation.failures.join("; ")
        )));
    }
    Ok(SystemRecipe {
        id,
        system,
        coeffs,
        mu_net,
        sigma_cols,
        gamma: 0.0,
        validation,
    })
}

/// Spectral heat operator `A = a·diag(π²k²)` with drift `c·ϱ(x)` and noise
/// `s·I` or `s·diag(x)`.
pub fn make_galerkin_heat(
    d: usize,
    a: f64,
    c: f64,
    s: f64,
    noise: NoiseKind,
    eta: f64,
) -> Result<SystemRecipe> {
    check_common(d, eta)?;
    if !(a >= 0.0 && s >= 0.0 && c.is_finite()) {
        return Err(param(format!(
            "galerkin_heat needs a, s ≥ 0, got a = {a}, s = {s}"
        )));
    }
    let diag: Vec<f64> = (1..=d).map(|k| a * PI * PI * (k * k) as f64).collect();
    let mut coeffs = DiagonalRelu::new(d);
    coeffs.mu_pos = c;
    match noise {
        NoiseKind::Additive => coeffs.sig_const = s,
        NoiseKind::Multiplicative => {
            coeffs.sig_pos = s;
            coeffs.sig_neg = -s;
        }
    }
    let kappa0 = 2f64.max(a * PI * PI);
    let id = match noise {
        NoiseKind::Additive => "galerkin_heat",
        NoiseKind::Multiplicative => "galerkin_heat_mult",
    };
    finish(
        id.into(),
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        coeffs,
        eta,
        kappa0,
        1.0,
    )
}

/// Dirichlet Laplacian `(d+1)²·tridiag(−1, 2, −1)` with drift
/// `L·ϱ(x) + t/(2√d)` and noise `(s/√d)·I`.
pub fn make_relu_drift_system(d: usize, l_mu: f64, eta: f64, s: f64) -> Result<SystemRecipe> {
    check_common(d, eta)?;
    if !(l_mu >= 0.0 && s >= 0.0) {
        return Err(param(format!(
            "relu_drift needs L ≥ 0 and s ≥ 0, got L = {l_mu}, s = {s}"
        )));
    }
    let scale = ((d + 1) * (d + 1)) as f64;
    let a = DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => 2.0 * scale,
        1 => -scale,
        _ => 0.0,
    });
    let mut coeffs = DiagonalRelu::new(d);
    coeffs.mu_pos = l_mu;
    coeffs.mu_time = 0.5 / (d as f64).sqrt();
    coeffs.sig_const = s / (d as f64).sqrt();
    let kappa0 = kappa0_cover(d, &[4.0 * scale, l_mu, 0.5, s]);
    finish("relu_drift".into(), a, coeffs, eta, kappa0, 1.0)
}

/// `A = aI`, `μ = 0`, `σ = (s/√d)·I + r·diag(x)`.
pub fn make_ou(d: usize, a: f64, s: f64, r: f64, eta: f64) -> Result<SystemRecipe> {
    check_common(d, eta)?;
    if !(a >= 0.0 && s >= 0.0 && r >= 0.0) {
        return Err(param(format!(
            "ou needs a, s, r ≥ 0, got a = {a}, s = {s}, r = {r}"
        )));
    }
    let mut coeffs = DiagonalRelu::new(d);
    coeffs.sig_const = s / (d as f64).sqrt();
    coeffs.sig_pos = r;
    coeffs.sig_neg = -r;
    let kappa0 = kappa0_cover(d, &[a, s, r]);
    let id = if r == 0.0 { "ou" } else { "ou_mult" };
    finish(
        id.into(),
        DMatrix::identity(d, d) * a,
        coeffs,
        eta,
        kappa0,
        1.0,
    )
}

/// Controlled variant: `μ = c·ϱ(x) + Bu` with the heat operator and additive noise.
/// Returns the coefficients (with `B` attached), `A`, and the constants of
/// the uncontrolled part.
pub fn make_controlled_heat(
    d: usize,
    a: f64,
    c: f64,
    s: f64,
    b: DMatrix<f64>,
    eta: f64,
) -> Result<SystemRecipe> {
    if b.nrows() != d {
        return Err(param(format!(
            "control matrix has {} rows, expected {d}",
            b.nrows()
        )));
    }
    let mut recipe = make_galerkin_heat(d, a, c, s, NoiseKind::Additive, eta)?;
    recipe.coeffs.control = b;
    let (mu_net, sigma_cols) = recipe.coeffs.networks();
    recipe.mu_net = mu_net;
    recipe.sigma_cols = sigma_cols;
    recipe.id = "controlled_heat".into();
    Ok(recipe)
}

/// Galerkin coefficients `1/k²` of a smooth initial profile.
pub fn smooth_profile(d: usize) -> Vec<f64> {
    (1..=d).map(|k| 1.0 / (k * k) as f64).collect()
}

/// Quadratic terminal cost with its truncation and network.
#[derive(Clone, Debug)]
pub struct CostPack {
    pub target: TruncatedSquare,
    pub net: Network,
    pub eps_cost: f64,
    /// `‖β‖_∞ d D² ε_cost`
    pub theta: f64,
}

impl CostPack {
    /// `f(x) = Σ β_m x_m²`
    pub fn f(&self, x: &[f64]) -> f64 {
        self.target.full(x)
    }

    /// The truncation `f_{d,D}`.
    pub fn f_trunc(&self, x: &[f64]) -> f64 {
        self.target.eval(x)
    }
}

pub fn make_quadratic_cost(beta: &[f64], radius: f64, eps_cost: f64) -> Result<CostPack> {
    let (target, net) = weighted_square_net(beta, radius, eps_cost)?;
    let theta = target.network_error_bound(eps_cost);
    Ok(CostPack {
        target,
        net,
        eps_cost,
        theta,
    })
}
