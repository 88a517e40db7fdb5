use super::{
    calibrate_cplan, mc_reference, plan_budget, synthesize, CalibrationStep, CoefficientNets,
    Measure, PlanConstants, Synthesis, SynthesisBudget,
};
use crate::error::Result;
use crate::sde::stats::{loglog_fit, LinearFit};
use crate::sde::{ou_exact_value, EulerConfig, PathBundle};
use crate::systems::SystemRecipe;
use std::time::Instant;

/// Settings shared by synthesis runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub t_end: f64,
    /// Growth exponent of the system constants in `d`.
    pub kappa: f64,
    pub seed: u64,
    pub l2_samples: usize,
    /// Paths and steps of the Monte Carlo reference when no closed form exists.
    pub reference_paths: usize,
    pub reference_steps: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            t_end: 1.0,
            kappa: 0.0,
            seed: 42,
            l2_samples: 2000,
            reference_paths: 4096,
            reference_steps: 256,
        }
    }
}

/// One line of a synthesis report.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthRow {
    pub budget: SynthesisBudget,
    pub net_size: u128,
    pub net_depth: usize,
    pub l2_error: f64,
    pub l2_stderr: f64,
    pub wall_ms: f64,
}

/// Cost weights `β_m = 1/d`.
pub fn normalized_weights(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

pub fn plan_constants(recipe: &SystemRecipe, opts: &SynthOptions) -> PlanConstants {
    let eta = recipe.system.consts.eta;
    PlanConstants {
        eta,
        kappa: opts.kappa,
        tau: Measure::uniform(recipe.system.d, eta).tau,
        t_end: opts.t_end,
        beta: recipe.system.consts.beta,
    }
}

/// A reference value function borrowing its recipe.
pub type ValueFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

/// `x ↦ E[f(X_T^x)]`: closed form for drift-free constant-diffusion systems,
/// otherwise a fine-grid Monte Carlo estimate.
pub fn reference_value<'a>(recipe: &'a SystemRecipe, opts: &SynthOptions) -> Result<ValueFn<'a>> {
    let d = recipe.system.d;
    let beta = normalized_weights(d);
    let coeffs = recipe.system.coeffs.as_ref();
    if let (true, Some(sigma)) = (coeffs.drift_is_zero(), coeffs.constant_diffusion()) {
        let a = recipe.system.a.clone();
        let t_end = opts.t_end;
        return Ok(Box::new(move |x: &[f64]| {
            ou_exact_value(&a, &sigma, &beta, x, t_end)
        }));
    }
    let cfg = EulerConfig::new(opts.t_end, opts.reference_steps);
    let paths = PathBundle::new(opts.seed ^ 0x5eed_f00d, opts.reference_paths, d);
    let cost = move |y: &[f64]| y.iter().zip(&beta).map(|(v, b)| b * v * v).sum::<f64>();
    Ok(Box::new(move |x: &[f64]| {
        mc_reference(&recipe.system.a, coeffs, &cost, cfg, &paths, x)
            .expect("reference simulation stays finite")
    }))
}

/// Plans, builds and scores one value network.
pub fn synth_row(
    recipe: &SystemRecipe,
    eps: f64,
    cplan: f64,
    opts: &SynthOptions,
) -> Result<(SynthRow, Synthesis)> {
    let budget = plan_budget(eps, recipe.system.d, &plan_constants(recipe, opts), cplan);
    synth_row_with(recipe, budget, opts)
}

/// Builds and scores the value network of a given budget.
pub fn synth_row_with(
    recipe: &SystemRecipe,
    budget: SynthesisBudget,
    opts: &SynthOptions,
) -> Result<(SynthRow, Synthesis)> {
    let start = Instant::now();
    let d = recipe.system.d;
    let nets = CoefficientNets::new(recipe.mu_net.clone(), recipe.sigma_cols.clone(), 0)?;
    let synth = synthesize(
        &nets,
        &recipe.system.a,
        &normalized_weights(d),
        &budget,
        opts.kappa,
        opts.seed,
    )?;
    let reference = reference_value(recipe, opts)?;
    let psi = &synth.psi;
    let (l2_error, l2_stderr) = super::l2_error(
        &|x| psi.eval(x)[0],
        reference.as_ref(),
        &Measure::uniform(d, recipe.system.consts.eta),
        opts.l2_samples,
        opts.seed.wrapping_add(1),
    );
    let row = SynthRow {
        budget,
        net_size: synth.report.size,
        net_depth: synth.report.depth,
        l2_error,
        l2_stderr,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((row, synth))
}

/// Largest `Cplan` on `grid` whose planned network meets `eps` on `recipe`.
pub fn calibrate(
    recipe: &SystemRecipe,
    eps: f64,
    grid: &[f64],
    opts: &SynthOptions,
) -> Result<(Option<f64>, Vec<CalibrationStep>)> {
    let pc = plan_constants(recipe, opts);
    calibrate_cplan(
        grid,
        |c| plan_budget(eps, recipe.system.d, &pc, c),
        |b| !b.saturated && b.n_steps.saturating_mul(b.paths) <= 1 << 20,
        |b| {
            let (row, _) = synth_row(recipe, eps, b.cplan, opts)?;
            Ok((row.l2_error, row.l2_stderr))
        },
    )
}

/// Fit of `log size` against `log x`.
pub fn size_fit(x: &[f64], rows: &[SynthRow]) -> LinearFit {
    let sizes: Vec<f64> = rows.iter().map(|r| r.net_size as f64).collect();
    loglog_fit(x, &sizes)
}
