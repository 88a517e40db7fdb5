//! Networks that realize Monte Carlo value estimators by unrolling the
//! linear-implicit scheme along fixed Brownian increments.

mod budget;
mod study;

pub use budget::{
    cost_accuracy, plan_budget, step_floor, truncation_radius, Measure, PlanConstants,
    SynthesisBudget,
};
pub use study::{
    calibrate, normalized_weights, plan_constants, reference_value, size_fit, synth_row,
    synth_row_with, SynthOptions, SynthRow, ValueFn,
};

use crate::calculus::{
    self, add_compose, add_compose_width_condition, bounds, combine, compose, identity_net,
};
use crate::error::{shape, Error, Result};
use crate::nn::{ensure_finite, fold_affine, Matrix, Network, Side};
use crate::sde::stats::{mean_stderr, pairwise_sum};
use crate::sde::{simulate_path, Coefficients, EulerConfig, ImplicitFactor, PathBundle};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// `x ↦ σ(t, x)b` from the column networks of `σ`.
pub fn diffusion_contract_net(sigma_cols: &[Network], b: &[f64]) -> Result<Network> {
    if sigma_cols.len() != b.len() {
        return Err(shape(format!(
            "{} column networks for a vector of length {}",
            sigma_cols.len(),
            b.len()
        )));
    }
    let net = combine(b, sigma_cols)?;
    let d = b.len() as u128;
    debug_assert!(net.size() <= d * d * sigma_cols[0].size());
    Ok(net)
}

/// Coefficient networks on `(t, x, u)`: one drift network and `d` diffusion
/// columns, all of one architecture.
#[derive(Clone, Debug)]
pub struct CoefficientNets {
    pub mu_net: Network,
    pub sigma_cols: Vec<Network>,
    /// Length of the trailing control input `u`; zero when uncontrolled.
    pub control_dim: usize,
}

impl CoefficientNets {
    pub fn new(mu_net: Network, sigma_cols: Vec<Network>, control_dim: usize) -> Result<Self> {
        let d = mu_net.dim_out();
        if sigma_cols.len() != d {
            return Err(shape(format!(
                "{} diffusion columns for d = {d}",
                sigma_cols.len()
            )));
        }
        if mu_net.dim_in() != 1 + d + control_dim {
            return Err(shape(format!(
                "coefficient networks take (t, x, u) of width {}, got {}",
                1 + d + control_dim,
                mu_net.dim_in()
            )));
        }
        let arch = mu_net.arch();
        if let Some(j) = sigma_cols.iter().position(|c| c.arch() != arch) {
            return Err(Error::Architecture(format!(
                "diffusion column {j} has dims {:?}, drift network has {:?}",
                sigma_cols[j].dims(),
                arch.dims
            )));
        }
        if mu_net.depth() < 2 {
            return Err(Error::Architecture(
                "coefficient networks need at least one hidden layer".into(),
            ));
        }
        Ok(CoefficientNets {
            mu_net,
            sigma_cols,
            control_dim,
        })
    }

    pub fn d(&self) -> usize {
        self.mu_net.dim_out()
    }

    /// Pins `t` and `u`: returns networks of `x` alone.
    fn pinned(&self, t: f64, u: &[f64]) -> Result<(Network, Vec<Network>)> {
        let d = self.d();
        let n_in = 1 + d + self.control_dim;
        let m = Matrix::from_triplets(n_in, d, (0..d).map(|i| (1 + i, i, 1.0)).collect());
        let mut c = vec![0.0; n_in];
        c[0] = t;
        c[1 + d..].copy_from_slice(u);
        let mu = fold_affine(&self.mu_net, Side::Pre, &m, &c)?;
        let cols = self
            .sigma_cols
            .iter()
            .map(|n| fold_affine(n, Side::Pre, &m, &c))
            .collect::<Result<_>>()?;
        Ok((mu, cols))
    }
}

/// Dimensions and size of the value network against the construction's bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub size: u128,
    pub depth: usize,
    pub path_dims: Vec<usize>,
    pub paths: usize,
    pub bound: u128,
}

/// Everything the unrolling needs besides the increments.
pub struct Unroller<'a> {
    pub nets: &'a CoefficientNets,
    pub a: &'a DMatrix<f64>,
    pub cfg: EulerConfig,
    inverse: Matrix,
}

impl<'a> Unroller<'a> {
    pub fn new(nets: &'a CoefficientNets, a: &'a DMatrix<f64>, cfg: EulerConfig) -> Result<Self> {
        if a.nrows() != nets.d() {
            return Err(shape(format!(
                "A is {}x{}, networks have d = {}",
                a.nrows(),
                a.ncols(),
                nets.d()
            )));
        }
        let inverse = ImplicitFactor::new(a, cfg.h())?.inverse_matrix();
        Ok(Unroller {
            nets,
            a,
            cfg,
            inverse,
        })
    }

    /// Network for `x ↦ Y_N` along `increments` (`N` rows of length `d`),
    /// with `u_n = control(n)` held during step `n`.
    pub fn state_net(
        &self,
        increments: &[f64],
        control: &dyn Fn(usize) -> Vec<f64>,
    ) -> Result<Network> {
        let d = self.nets.d();
        let h = self.cfg.h();
        if increments.len() != self.cfg.n_steps * d {
            return Err(shape(format!(
                "expected {} increments, got {}",
                self.cfg.n_steps * d,
                increments.len()
            )));
        }
        let zero = vec![0.0; d];
        let hidden_mu = self.nets.mu_net.dims()[self.nets.mu_net.depth() - 1];
        let hidden_sigma = self.nets.sigma_cols[0].dims()[self.nets.mu_net.depth() - 1];
        let mut psi = fold_affine(&identity_net(d, 1), Side::Post, &self.inverse, &zero)?;
        for n in 0..self.cfg.n_steps {
            let (mu, cols) = self.nets.pinned(self.cfg.time(n), &control(n))?;
            let mu = fold_affine(&mu, Side::Post, &Matrix::identity(d).scaled(h), &zero)?;
            let sigma = diffusion_contract_net(&cols, &increments[n * d..(n + 1) * d])?;
            let branches = [mu, sigma];
            if !add_compose_width_condition(&psi, &branches) {
                return Err(Error::Architecture(format!(
                    "width condition fails at step {n}"
                )));
            }
            let next = add_compose(&psi, &branches, &[])?;
            let dims = next.dims();
            let last_hidden = dims[dims.len() - 2];
            assert_eq!(
                last_hidden,
                2 * d + hidden_mu + d * hidden_sigma,
                "width after add-and-compose at step {n}"
            );
            psi = fold_affine(&next, Side::Post, &self.inverse, &zero)?;
        }
        Ok(psi)
    }

    /// Increments of path `m`, row after row.
    pub fn increments(&self, paths: &PathBundle, m: usize) -> Vec<f64> {
        paths.path(m, self.cfg.n_steps, self.cfg.h())
    }

    /// `x ↦ cost(Y^m_N)` for every path, in path order.
    pub fn path_nets(
        &self,
        cost_net: &Network,
        paths: &PathBundle,
        control: &(dyn Fn(usize) -> Vec<f64> + Sync),
    ) -> Result<Vec<Network>> {
        (0..paths.paths)
            .into_par_iter()
            .map(|m| {
                let state = self.state_net(&self.increments(paths, m), control)?;
                compose(cost_net, &state)
            })
            .collect()
    }
}

/// `ψ` with `R(ψ)(x) = (1/M) Σ_m cost(Y^{x,m}_N)`.
pub fn unroll_value_net(
    nets: &CoefficientNets,
    a: &DMatrix<f64>,
    cost_net: &Network,
    cfg: EulerConfig,
    paths: &PathBundle,
) -> Result<(Network, ComplexityReport)> {
    if nets.control_dim != 0 {
        return Err(shape(
            "unroll_value_net expects uncontrolled coefficient networks",
        ));
    }
    let unroller = Unroller::new(nets, a, cfg)?;
    let path_nets = unroller.path_nets(cost_net, paths, &|_| Vec::new())?;
    let weight = 1.0 / paths.paths as f64;
    let psi = combine(&vec![weight; paths.paths], &path_nets)?;
    ensure_finite(&psi, "unrolling")?;
    let report = complexity(
        nets,
        cost_net,
        cfg.n_steps,
        paths.paths,
        &path_nets[0],
        &psi,
    );
    assert!(
        report.size <= report.bound,
        "value network exceeds its size bound"
    );
    Ok((psi, report))
}

pub(crate) fn complexity(
    nets: &CoefficientNets,
    cost_net: &Network,
    steps: usize,
    paths: usize,
    path_net: &Network,
    psi: &Network,
) -> ComplexityReport {
    let sigma_total: u128 = nets.sigma_cols.iter().map(Network::size).sum();
    ComplexityReport {
        size: psi.size(),
        depth: psi.depth(),
        path_dims: path_net.dims(),
        paths,
        bound: bounds::unrolled_value(paths, cost_net.size(), sigma_total, nets.d(), steps),
    }
}

/// Dimensions of one path network, computed by building it along zero
/// increments. The architecture does not depend on the increments.
pub fn path_dims(
    nets: &CoefficientNets,
    a: &DMatrix<f64>,
    cost_net: &Network,
    cfg: EulerConfig,
) -> Result<Vec<usize>> {
    let unroller = Unroller::new(nets, a, cfg)?;
    let control_dim = nets.control_dim;
    let state = unroller.state_net(&vec![0.0; cfg.n_steps * nets.d()], &|_| {
        vec![0.0; control_dim]
    })?;
    Ok(compose(cost_net, &state)?.dims())
}

/// Size of the value network over `paths` copies, without building it.
pub fn value_net_size(path_dims: &[usize], paths: usize) -> u128 {
    calculus::bounds::combined_size(path_dims, paths)
}

/// `(1/M) Σ_m cost(Y^m_N)` by direct simulation from `x`.
pub fn mc_reference(
    a: &DMatrix<f64>,
    coeffs: &dyn Coefficients,
    cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: EulerConfig,
    paths: &PathBundle,
    x: &[f64],
) -> Result<f64> {
    let factor = ImplicitFactor::new(a, cfg.h())?;
    mc_reference_with(&factor, coeffs, cost, cfg, paths, x)
}

pub fn mc_reference_with(
    factor: &ImplicitFactor,
    coeffs: &dyn Coefficients,
    cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: EulerConfig,
    paths: &PathBundle,
    x: &[f64],
) -> Result<f64> {
    let values: Vec<f64> = (0..paths.paths)
        .into_par_iter()
        .map(|m| {
            simulate_path(factor, coeffs, x, &cfg, paths, m, 1, |_, _| {})
                .map(|y| cost(y.as_slice()))
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&values) / paths.paths as f64)
}

/// Root-mean-square gap between `approx` and `reference` under `measure`,
/// with its standard error.
pub fn l2_error(
    approx: &(dyn Fn(&[f64]) -> f64 + Sync),
    reference: &(dyn Fn(&[f64]) -> f64 + Sync),
    measure: &Measure,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    let points = measure.sample(n_samples, seed);
    let sq: Vec<f64> = points
        .par_iter()
        .map(|x| (approx(x) - reference(x)).powi(2))
        .collect();
    let (ms, se) = mean_stderr(&sq);
    let rms = ms.sqrt();
    let stderr = if rms > 0.0 { se / (2.0 * rms) } else { 0.0 };
    (rms, stderr)
}

/// Uniform random points in `[lo, hi]^d`.
pub fn sample_box(d: usize, n: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect()
}

/// Outcome of one calibration candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationStep {
    pub cplan: f64,
    pub budget: SynthesisBudget,
    pub l2: f64,
    pub l2_stderr: f64,
}

/// Walks `grid` (descending) and returns the first `Cplan` whose planned
/// budget meets `eps` according to `evaluate`, with the steps tried.
/// Candidates whose budget `admissible` rejects are skipped.
pub fn calibrate_cplan(
    grid: &[f64],
    plan: impl Fn(f64) -> SynthesisBudget,
    admissible: impl Fn(&SynthesisBudget) -> bool,
    evaluate: impl Fn(&SynthesisBudget) -> Result<(f64, f64)>,
) -> Result<(Option<f64>, Vec<CalibrationStep>)> {
    let mut steps = Vec::new();
    for &c in grid {
        let budget = plan(c);
        if !admissible(&budget) {
            continue;
        }
        let (l2, l2_stderr) = evaluate(&budget)?;
        let ok = l2 <= budget.eps;
        steps.push(CalibrationStep {
            cplan: c,
            budget,
            l2,
            l2_stderr,
        });
        if ok {
            return Ok((Some(c), steps));
        }
    }
    Ok((None, steps))
}

/// `2^20, 2^19, …, 2^-10`
pub fn default_cplan_grid() -> Vec<f64> {
    (-10..=20).rev().map(|k| 2f64.powi(k)).collect()
}

/// Value network for a planned budget, with its size report and the
/// accuracy used for the cost network.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub psi: Network,
    pub report: ComplexityReport,
    pub eps_cost: f64,
    pub cost_size: u128,
}

/// Builds the quadratic cost `Σ β_m x_m²` at the budget's truncation radius
/// and accuracy, then unrolls `budget.paths` paths of `budget.n_steps` steps.
pub fn synthesize(
    nets: &CoefficientNets,
    a: &DMatrix<f64>,
    beta: &[f64],
    budget: &SynthesisBudget,
    kappa: f64,
    seed: u64,
) -> Result<Synthesis> {
    let beta_sup = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    if beta_sup == 0.0 {
        return Err(crate::error::param("cost weights are all zero"));
    }
    let too_big = |n: u64| usize::try_from(n).map_or(true, |n| n > 1 << 24);
    if budget.saturated || too_big(budget.n_steps) || too_big(budget.paths) {
        return Err(crate::error::param(format!(
            "budget with N = {} and M = {} is too large to build",
            budget.n_steps, budget.paths
        )));
    }
    let eps_cost = cost_accuracy(budget, beta_sup, kappa);
    let (_, cost_net) = calculus::weighted_square_net(beta, budget.radius, eps_cost)?;
    let cfg = EulerConfig::new(budget.t_end, budget.n_steps as usize);
    let paths = PathBundle::new(seed, budget.paths as usize, budget.d);
    let (psi, report) = unroll_value_net(nets, a, &cost_net, cfg, &paths)?;
    Ok(Synthesis {
        psi,
        report,
        eps_cost,
        cost_size: cost_net.size(),
    })
}
