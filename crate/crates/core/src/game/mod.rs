//! Zero-sum games over piecewise-constant strategies: per-strategy value
//! networks and the inf-sup network built from min and max trees.

use crate::calculus::{bounds, combine, max_tree_padded, min_tree_padded};
use crate::error::{param, shape, Error, Result};
use crate::nn::{ensure_finite, fold_affine, Matrix, Network, Side};
use crate::sde::{Coefficients, EulerConfig, ImplicitFactor, PathBundle};
use crate::synth::{mc_reference_with, CoefficientNets, Unroller};
use crate::systems::DiagonalRelu;
use nalgebra::DMatrix;
use std::sync::Arc;

/// Default refusal threshold on the number of strategy pairs.
pub const STRATEGY_PAIR_CAP: usize = 4096;

/// Action sequence of one player, as indices into that player's action set.
pub type Strategy = Vec<usize>;

/// Payoff `g(u₁, u₂)` on strategy pairs.
pub type Payoff = Arc<dyn Fn(&[usize], &[usize]) -> f64 + Send + Sync>;

/// Intervention times, finite action sets and the control cost.
#[derive(Clone)]
pub struct StrategyGrid {
    /// `t̄₁ = 0 ≤ t̄₂ ≤ … ≤ t̄_M ≤ T`
    pub times: Vec<f64>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub g: Payoff,
    pub cap: usize,
}

impl std::fmt::Debug for StrategyGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StrategyGrid")
            .field("times", &self.times)
            .field("u1", &self.u1)
            .field("u2", &self.u2)
            .field("cap", &self.cap)
            .finish_non_exhaustive()
    }
}

impl StrategyGrid {
    pub fn new(times: Vec<f64>, u1: Vec<Vec<f64>>, u2: Vec<Vec<f64>>, g: Payoff) -> Result<Self> {
        if times.is_empty() {
            return Err(param("at least one intervention time is required"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(param(format!(
                "intervention times must start at 0 and be non-decreasing, got {times:?}"
            )));
        }
        for (name, set) in [("U1", &u1), ("U2", &u2)] {
            if set.is_empty() {
                return Err(param(format!("{name} is empty")));
            }
            if set.iter().any(|a| a.len() != set[0].len()) {
                return Err(shape(format!("actions in {name} have different lengths")));
            }
        }
        Ok(StrategyGrid {
            times,
            u1,
            u2,
            g,
            cap: STRATEGY_PAIR_CAP,
        })
    }

    /// `g(u₁, u₂) = (1/M) Σ_k G[u₁(t̄_k)][u₂(t̄_k)]` for an action payoff matrix `G`.
    pub fn matrix_payoff(matrix: Vec<Vec<f64>>) -> Payoff {
        Arc::new(move |s1: &[usize], s2: &[usize]| {
            let total: f64 = s1.iter().zip(s2).map(|(&a, &b)| matrix[a][b]).sum();
            total / s1.len() as f64
        })
    }

    pub fn interventions(&self) -> usize {
        self.times.len()
    }

    /// Width of the joint control `(u₁, u₂)`.
    pub fn control_dim(&self) -> usize {
        self.u1[0].len() + self.u2[0].len()
    }

    /// Index `k` of the interval `[t̄_k, t̄_{k+1})` holding `t`.
    pub fn interval(&self, t: f64) -> usize {
        let scale = self.times.last().copied().unwrap_or(1.0).max(1.0);
        self.times
            .iter()
            .rposition(|&tk| tk <= t + 1e-12 * scale)
            .unwrap_or(0)
    }

    /// Joint action in force at time `t`.
    pub fn control_at(&self, s1: &[usize], s2: &[usize], t: f64) -> Vec<f64> {
        let k = self.interval(t);
        let mut u = self.u1[s1[k]].clone();
        u.extend_from_slice(&self.u2[s2[k]]);
        u
    }
}

/// All `|U₁|^M` and `|U₂|^M` strategies, in lexicographic order.
pub fn enumerate_strategies(grid: &StrategyGrid) -> Result<(Vec<Strategy>, Vec<Strategy>)> {
    let m = grid.interventions() as u32;
    let count = |n: usize| (n as u128).checked_pow(m).unwrap_or(u128::MAX);
    let pairs = count(grid.u1.len()).saturating_mul(count(grid.u2.len()));
    if pairs > grid.cap as u128 {
        return Err(Error::Cap {
            count: pairs,
            cap: grid.cap as u128,
        });
    }
    Ok((
        sequences(grid.u1.len(), m as usize),
        sequences(grid.u2.len(), m as usize),
    ))
}

fn sequences(n: usize, len: usize) -> Vec<Strategy> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| (0..n).map(move |a| [s.clone(), vec![a]].concat()))
            .collect();
    }
    out
}

/// Coefficients `μ(t, x, u)` and `σ(t, x, u)` with a joint control input.
pub trait ControlledCoefficients: Send + Sync {
    fn dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift_u(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);
    fn diffusion_apply_u(&self, t: f64, x: &[f64], u: &[f64], b: &[f64], out: &mut [f64]);
}

impl ControlledCoefficients for DiagonalRelu {
    fn dim(&self) -> usize {
        self.d
    }

    fn control_dim(&self) -> usize {
        DiagonalRelu::control_dim(self)
    }

    fn drift_u(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        DiagonalRelu::drift_u(self, t, x, u, out)
    }

    fn diffusion_apply_u(&self, t: f64, x: &[f64], _u: &[f64], b: &[f64], out: &mut [f64]) {
        self.diffusion_apply(t, x, b, out)
    }
}

/// Uncontrolled view of a controlled system under a fixed strategy pair.
pub struct Scheduled<'a> {
    pub base: &'a dyn ControlledCoefficients,
    pub grid: &'a StrategyGrid,
    pub s1: &'a [usize],
    pub s2: &'a [usize],
}

impl Coefficients for Scheduled<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let u = self.grid.control_at(self.s1, self.s2, t);
        self.base.drift_u(t, x, &u, out)
    }

    fn diffusion_apply(&self, t: f64, x: &[f64], b: &[f64], out: &mut [f64]) {
        let u = self.grid.control_at(self.s1, self.s2, t);
        self.base.diffusion_apply_u(t, x, &u, b, out)
    }
}

/// Network for `x ↦ (1/M) Σ_m cost(Y^{x,m,u₁,u₂}_N) + g(u₁, u₂)`; its
/// architecture does not depend on the strategy pair.
#[allow(clippy::too_many_arguments)]
pub fn controlled_value_net(
    s1: &[usize],
    s2: &[usize],
    nets: &CoefficientNets,
    grid: &StrategyGrid,
    a: &DMatrix<f64>,
    cost_net: &Network,
    cfg: EulerConfig,
    paths: &PathBundle,
) -> Result<Network> {
    check_strategies(grid, s1, s2)?;
    if nets.control_dim != grid.control_dim() {
        return Err(shape(format!(
            "coefficient networks take controls of width {}, the grid has {}",
            nets.control_dim,
            grid.control_dim()
        )));
    }
    let unroller = Unroller::new(nets, a, cfg)?;
    let control = |n: usize| grid.control_at(s1, s2, cfg.time(n));
    let path_nets = unroller.path_nets(cost_net, paths, &control)?;
    let mean = combine(&vec![1.0 / paths.paths as f64; paths.paths], &path_nets)?;
    let shifted = fold_affine(&mean, Side::Post, &Matrix::identity(1), &[(grid.g)(s1, s2)])?;
    ensure_finite(&shifted, "controlled unrolling")?;
    Ok(shifted)
}

fn check_strategies(grid: &StrategyGrid, s1: &[usize], s2: &[usize]) -> Result<()> {
    let m = grid.interventions();
    if s1.len() != m || s2.len() != m {
        return Err(shape(format!(
            "strategies of length {} and {} for {m} interventions",
            s1.len(),
            s2.len()
        )));
    }
    if s1.iter().any(|&i| i >= grid.u1.len()) || s2.iter().any(|&i| i >= grid.u2.len()) {
        return Err(param("strategy refers to an action outside its set"));
    }
    Ok(())
}

/// Dimensions and size of the inf-sup network against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct InfSupReport {
    pub size: u128,
    pub depth: usize,
    /// The max-tree bound applied to the rows and then to the column of maxima.
    pub bound: u128,
    /// `c` in `C(ψ) ≤ c(|U₁||U₂|)³ C(w)` for this instance.
    pub cubic_constant: f64,
}

/// `x ↦ min_{u₁} max_{u₂} w_{u₁,u₂}(x)` for `w[u₁][u₂]`.
pub fn infsup_net(w: &[Vec<Network>]) -> Result<(Network, InfSupReport)> {
    if w.is_empty()
        || w.iter()
            .any(|row| row.len() != w[0].len() || row.is_empty())
    {
        return Err(shape(
            "value networks must form a non-empty rectangular table",
        ));
    }
    let maxes = w
        .iter()
        .map(|row| max_tree_padded(row))
        .collect::<Result<Vec<_>>>()?;
    let net = min_tree_padded(&maxes)?;
    let c = w[0][0].size();
    let n1 = w.len().next_power_of_two().trailing_zeros();
    let n2 = w[0].len().next_power_of_two().trailing_zeros();
    let bound = bounds::max_tree(n1, bounds::max_tree(n2, c));
    assert!(
        net.size() <= bound,
        "inf-sup network exceeds its size bound"
    );
    let pairs = (w.len() * w[0].len()) as f64;
    let report = InfSupReport {
        size: net.size(),
        depth: net.depth(),
        bound,
        cubic_constant: net.size() as f64 / (pairs.powi(3) * c as f64),
    };
    Ok((net, report))
}

/// The full construction: every strategy pair's value network, then the
/// inf-sup network.
pub fn game_value_net(
    nets: &CoefficientNets,
    grid: &StrategyGrid,
    a: &DMatrix<f64>,
    cost_net: &Network,
    cfg: EulerConfig,
    paths: &PathBundle,
) -> Result<(Network, InfSupReport)> {
    let (st1, st2) = enumerate_strategies(grid)?;
    let w = st1
        .iter()
        .map(|s1| {
            st2.iter()
                .map(|s2| controlled_value_net(s1, s2, nets, grid, a, cost_net, cfg, paths))
                .collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    infsup_net(&w)
}

/// `min_{u₁} max_{u₂}` of the per-pair Monte Carlo estimates plus `g`, all
/// pairs driven by the same increments.
pub fn brute_force_game_value(
    sys: &dyn ControlledCoefficients,
    grid: &StrategyGrid,
    a: &DMatrix<f64>,
    cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: EulerConfig,
    paths: &PathBundle,
    x: &[f64],
) -> Result<f64> {
    let (st1, st2) = enumerate_strategies(grid)?;
    let factor = ImplicitFactor::new(a, cfg.h())?;
    let mut value = f64::INFINITY;
    for s1 in &st1 {
        let mut best = f64::NEG_INFINITY;
        for s2 in &st2 {
            let coeffs = Scheduled {
                base: sys,
                grid,
                s1,
                s2,
            };
            let w = mc_reference_with(&factor, &coeffs, cost, cfg, paths, x)? + (grid.g)(s1, s2);
            best = best.max(w);
        }
        value = value.min(best);
    }
    Ok(value)
}

/// Per-strategy accuracy `δ = ε(κ₀d^{κ₀})^{−M/2}`.
pub fn game_delta(eps: f64, d: usize, kappa0: f64, interventions: usize) -> f64 {
    assert!(eps > 0.0 && eps <= 1.0, "ε must lie in (0, 1], got {eps}");
    let card = kappa0 * (d as f64).powf(kappa0);
    eps * card.powf(-(interventions as f64) / 2.0)
}
