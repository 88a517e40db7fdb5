use crate::artifact::{fmt_f64, Table};
use crate::config::{
    CalculusCheckConfig, ConvergenceConfig, GameConfig, PlanSettings, ScalingConfig, SynthConfig,
    SystemConfig,
};
use crate::CliError;
use nalgebra::DMatrix;
use std::fs;
use std::path::Path;
use std::time::Instant;
use stiffnet::calculus::{suite, weighted_square_net};
use stiffnet::game::{
    brute_force_game_value, enumerate_strategies, game_delta, game_value_net, StrategyGrid,
};
use stiffnet::nn::write_network;
use stiffnet::sde::{
    ou_exact_value, strong_rate_study, weak_rate_study, EulerConfig, PathBundle, WeakReference,
};
use stiffnet::synth::{
    calibrate, cost_accuracy, default_cplan_grid, normalized_weights, plan_budget, plan_constants,
    sample_box, size_fit, synth_row_with, CoefficientNets, Measure, PlanConstants, SynthOptions,
    SynthRow,
};
use stiffnet::systems::{make_controlled_heat, SystemRecipe};

/// Artifacts written by a study and the checks it failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<String>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn write(&mut self, dir: &Path, name: &str, table: &Table) -> Result<(), CliError> {
        table.write(&dir.join(name))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

fn build(system: &SystemConfig) -> Result<SystemRecipe, CliError> {
    system
        .recipe_spec()?
        .build()
        .map_err(|e| CliError::Config(format!("system {}: {e}", system.id)))
}

pub fn calculus_check(c: &CalculusCheckConfig, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let mut table = Table::new(&[
        "operation",
        "instances",
        "points",
        "max_rel_err",
        "bound_violations",
        "passed",
    ]);
    for row in suite::exactness_suite(c.instances, c.points, seed)? {
        let passed = row.passed(c.tol);
        if !passed {
            out.failures.push(format!(
                "{}: error {:.3e}, {} bound violations",
                row.operation, row.max_rel_err, row.bound_violations
            ));
        }
        table.push(vec![
            row.operation.into(),
            row.instances.to_string(),
            row.points.to_string(),
            fmt_f64(row.max_rel_err),
            row.bound_violations.to_string(),
            passed.to_string(),
        ]);
    }
    out.write(dir, "calculus.csv", &table)?;
    Ok(out)
}

/// Closed-form `E f(X_T)` when the system is a drift-free linear SDE.
fn exact_quadratic(recipe: &SystemRecipe, beta: &[f64], x0: &[f64], t_end: f64) -> Option<f64> {
    let coeffs = recipe.system.coeffs.as_ref();
    let sigma = coeffs.constant_diffusion()?;
    coeffs
        .drift_is_zero()
        .then(|| ou_exact_value(&recipe.system.a, &sigma, beta, x0, t_end))
}

pub fn convergence(c: &ConvergenceConfig, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let recipe = build(&c.system)?;
    let d = recipe.system.d;
    let x0 = c.x0.resolve(d);
    let paths = PathBundle::new(seed, c.paths, d);
    let coeffs = recipe.system.coeffs.as_ref();
    let strong = strong_rate_study(&recipe.system, coeffs, &x0, c.t_end, &c.n_list, &paths)?;

    let beta = normalized_weights(d);
    let cost = |y: &[f64]| y.iter().zip(&beta).map(|(v, b)| b * v * v).sum::<f64>();
    let reference = match exact_quadratic(&recipe, &beta, &x0, c.t_end) {
        Some(v) => WeakReference::Exact(v),
        None => WeakReference::FineGrid(&cost),
    };
    let weak = weak_rate_study(
        &recipe.system,
        coeffs,
        &cost,
        reference,
        &x0,
        c.t_end,
        &c.n_list,
        &paths,
    )?;

    let mut table = Table::new(&["N", "h", "strong_err", "weak_err", "stderr"]);
    for row in &strong.rows {
        let weak_err = weak
            .rows
            .iter()
            .find(|w| w.n == row.n)
            .map_or(f64::NAN, |w| w.weak_err);
        table.push(vec![
            row.n.to_string(),
            fmt_f64(row.h),
            fmt_f64(row.strong_err),
            fmt_f64(weak_err),
            fmt_f64(row.stderr),
        ]);
    }
    out.write(dir, "convergence.csv", &table)?;

    let [lo, hi] = c.slope_window;
    let passed = strong.slope() >= lo && strong.slope() <= hi;
    if !passed {
        out.failures.push(format!(
            "strong slope {:.4} outside [{lo}, {hi}]",
            strong.slope()
        ));
    }
    let (weak_slope, weak_r2) = weak
        .fit
        .as_ref()
        .map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r2));
    let mut summary = Table::new(&[
        "system",
        "d",
        "paths",
        "strong_slope",
        "strong_slope_se",
        "strong_r2",
        "weak_slope",
        "weak_r2",
        "discarded_coarsest",
        "wide_ci",
        "passed",
    ]);
    summary.push(vec![
        recipe.id.clone(),
        d.to_string(),
        c.paths.to_string(),
        fmt_f64(strong.fit.slope),
        fmt_f64(strong.fit.slope_se),
        fmt_f64(strong.fit.r2),
        fmt_f64(weak_slope),
        fmt_f64(weak_r2),
        strong.discarded_coarsest.to_string(),
        strong.wide_ci.to_string(),
        passed.to_string(),
    ]);
    out.write(dir, "convergence_summary.csv", &summary)?;
    Ok(out)
}

const SYNTH_COLUMNS: [&str; 11] = [
    "d",
    "eps",
    "N",
    "M",
    "D",
    "delta",
    "net_size",
    "net_depth",
    "l2_error",
    "l2_stderr",
    "wall_ms",
];

fn synth_cells(row: &SynthRow) -> Vec<String> {
    let b = &row.budget;
    vec![
        b.d.to_string(),
        fmt_f64(b.eps),
        b.n_steps.to_string(),
        b.paths.to_string(),
        fmt_f64(b.radius),
        fmt_f64(b.delta),
        row.net_size.to_string(),
        row.net_depth.to_string(),
        fmt_f64(row.l2_error),
        fmt_f64(row.l2_stderr),
        format!("{:.3}", row.wall_ms),
    ]
}

/// `Cplan` from the settings, or calibrated on the settings' instance.
fn resolve_cplan(
    system: &SystemConfig,
    plan: &PlanSettings,
    opts: &SynthOptions,
    dir: &Path,
    out: &mut Outcome,
) -> Result<Option<f64>, CliError> {
    if let Some(c) = plan.cplan {
        return Ok(Some(c));
    }
    let calib = build(&SystemConfig {
        d: plan.calibration.d,
        ..system.clone()
    })?;
    let (found, steps) = calibrate(&calib, plan.calibration.eps, &default_cplan_grid(), opts)?;
    let mut table = Table::new(&[
        "cplan",
        "d",
        "eps",
        "N",
        "M",
        "l2_error",
        "l2_stderr",
        "accepted",
    ]);
    for s in &steps {
        table.push(vec![
            fmt_f64(s.cplan),
            plan.calibration.d.to_string(),
            fmt_f64(plan.calibration.eps),
            s.budget.n_steps.to_string(),
            s.budget.paths.to_string(),
            fmt_f64(s.l2),
            fmt_f64(s.l2_stderr),
            (Some(s.cplan) == found).to_string(),
        ]);
    }
    out.write(dir, "calibration.csv", &table)?;
    if found.is_none() {
        out.failures
            .push("no Cplan on the calibration grid meets the calibration accuracy".into());
    }
    Ok(found)
}

pub fn synth(c: &SynthConfig, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let opts = c.plan.options(seed);
    let Some(cplan) = resolve_cplan(&c.system, &c.plan, &opts, dir, &mut out)? else {
        return Ok(out);
    };
    let recipe = build(&c.system)?;
    let pc = plan_constants(&recipe, &opts);
    let mut table = Table::new(&SYNTH_COLUMNS);
    if c.save_networks {
        fs::create_dir_all(dir.join("networks")).map_err(|e| CliError::Io(e.to_string()))?;
    }
    for &eps in &c.eps {
        let budget = plan_budget(eps, recipe.system.d, &pc, cplan).with_counts(
            c.budget.n_steps,
            c.budget.paths,
            pc.eta,
        );
        let (row, synth) = synth_row_with(&recipe, budget, &opts)?;
        if row.l2_error > eps {
            out.failures.push(format!(
                "d = {}, ε = {eps}: L² error {:.4} exceeds ε",
                recipe.system.d, row.l2_error
            ));
        }
        if c.save_networks {
            let path = dir
                .join("networks")
                .join(format!("psi_d{}_eps{eps}.net", recipe.system.d));
            fs::write(&path, write_network(&synth.psi))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        table.push(synth_cells(&row));
    }
    out.write(dir, "synth.csv", &table)?;
    Ok(out)
}

fn default_control(d: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, m, |i, j| if i == j % d { 1.0 } else { 0.0 })
}

pub fn game(c: &GameConfig, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut out = Outcome::default();
    let m = c.u1[0].len() + c.u2[0].len();
    let b = match &c.control {
        Some(rows) => DMatrix::from_fn(c.d, m, |i, j| rows[i][j]),
        None => default_control(c.d, m),
    };
    let recipe = make_controlled_heat(c.d, c.a, c.c, c.s, b, c.eta)
        .map_err(|e| CliError::Config(format!("controlled system: {e}")))?;
    let grid = StrategyGrid::new(
        c.times.clone(),
        c.u1.clone(),
        c.u2.clone(),
        StrategyGrid::matrix_payoff(c.payoff.clone()),
    )?;
    let (st1, st2) = enumerate_strategies(&grid)?;

    let delta = game_delta(c.eps, c.d, c.kappa0, grid.interventions());
    let pc = PlanConstants {
        eta: c.eta,
        kappa: 0.0,
        tau: Measure::uniform(c.d, c.eta).tau,
        t_end: c.t_end,
        beta: recipe.system.consts.beta,
    };
    let budget =
        plan_budget(delta, c.d, &pc, c.cplan).with_counts(c.budget.n_steps, c.budget.paths, c.eta);
    if budget.saturated || budget.n_steps > 1 << 16 || budget.paths > 1 << 16 {
        return Err(CliError::Config(format!(
            "game budget N = {}, M = {} is too large; set budget.n_steps and budget.paths",
            budget.n_steps, budget.paths
        )));
    }
    let beta = normalized_weights(c.d);
    let (_, cost_net) =
        weighted_square_net(&beta, budget.radius, cost_accuracy(&budget, beta[0], 0.0))?;
    let nets = CoefficientNets::new(recipe.mu_net.clone(), recipe.sigma_cols.clone(), m)?;
    let cfg = EulerConfig::new(c.t_end, budget.n_steps as usize);
    let paths = PathBundle::new(seed, budget.paths as usize, c.d);
    let (psi, report) = game_value_net(&nets, &grid, &recipe.system.a, &cost_net, cfg, &paths)?;

    let cost = |y: &[f64]| cost_net.eval(y)[0];
    let mut agreement: f64 = 0.0;
    for x in sample_box(c.d, c.points, 0.0, 1.0, seed.wrapping_add(1)) {
        let brute = brute_force_game_value(
            &recipe.coeffs,
            &grid,
            &recipe.system.a,
            &cost,
            cfg,
            &paths,
            &x,
        )?;
        agreement = agreement.max((psi.eval(&x)[0] - brute).abs() / (1.0 + brute.abs()));
    }
    if agreement.is_nan() || agreement > c.tol {
        out.failures
            .push(format!("network and enumeration differ by {agreement:.3e}"));
    }

    let mut table = Table::new(&[
        "d",
        "eps",
        "M_interventions",
        "n_strategies",
        "N",
        "paths",
        "delta",
        "net_size",
        "net_depth",
        "agreement_err",
        "wall_ms",
    ]);
    table.push(vec![
        c.d.to_string(),
        fmt_f64(c.eps),
        grid.interventions().to_string(),
        (st1.len() * st2.len()).to_string(),
        budget.n_steps.to_string(),
        budget.paths.to_string(),
        fmt_f64(delta),
        report.size.to_string(),
        report.depth.to_string(),
        fmt_f64(agreement),
        format!("{:.3}", start.elapsed().as_secs_f64() * 1e3),
    ]);
    out.write(dir, "game.csv", &table)?;
    Ok(out)
}

pub fn scaling(c: &ScalingConfig, seed: u64, dir: &Path) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let opts = c.plan.options(seed);
    let system = |d: usize| SystemConfig {
        id: c.system_id.clone(),
        d,
        params: c.params.clone(),
    };
    let Some(cplan) = resolve_cplan(&system(c.plan.calibration.d), &c.plan, &opts, dir, &mut out)?
    else {
        return Ok(out);
    };

    let run = |d: usize, eps: f64| -> Result<SynthRow, CliError> {
        let recipe = build(&system(d))?;
        let budget = plan_budget(eps, d, &plan_constants(&recipe, &opts), cplan);
        Ok(synth_row_with(&recipe, budget, &opts)?.0)
    };
    let by_d = c
        .dims
        .iter()
        .map(|&d| run(d, c.eps_for_dims))
        .collect::<Result<Vec<_>, _>>()?;
    let by_eps = c
        .eps_list
        .iter()
        .map(|&e| run(c.d_for_eps, e))
        .collect::<Result<Vec<_>, _>>()?;

    let mut header = vec!["sweep"];
    header.extend(SYNTH_COLUMNS);
    let mut table = Table::new(&header);
    for (sweep, rows) in [("d", &by_d), ("eps", &by_eps)] {
        for row in rows {
            table.push([vec![sweep.to_string()], synth_cells(row)].concat());
        }
    }
    out.write(dir, "scaling.csv", &table)?;

    let xd: Vec<f64> = c.dims.iter().map(|&d| d as f64).collect();
    let xe: Vec<f64> = c.eps_list.iter().map(|e| 1.0 / e).collect();
    let mut summary = Table::new(&["sweep", "slope", "intercept", "r2", "passed"]);
    for (sweep, fit) in [
        ("d", size_fit(&xd, &by_d)),
        ("inv_eps", size_fit(&xe, &by_eps)),
    ] {
        let passed = fit.slope.is_finite() && fit.r2 >= c.r2_min;
        if !passed {
            out.failures.push(format!(
                "{sweep} sweep: slope {:.4}, R² {:.4} below {}",
                fit.slope, fit.r2, c.r2_min
            ));
        }
        summary.push(vec![
            sweep.into(),
            fmt_f64(fit.slope),
            fmt_f64(fit.intercept),
            fmt_f64(fit.r2),
            passed.to_string(),
        ]);
    }
    out.write(dir, "scaling_summary.csv", &summary)?;
    Ok(out)
}
