use crate::CliError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use stiffnet::systems::RecipeSpec;

/// One study per document, selected by the `study` key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    CalculusCheck(CalculusCheckConfig),
    Convergence(ConvergenceConfig),
    Synth(SynthConfig),
    Game(GameConfig),
    Scaling(ScalingConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::CalculusCheck(_) => "calculus-check",
            ExperimentConfig::Convergence(_) => "convergence",
            ExperimentConfig::Synth(_) => "synth",
            ExperimentConfig::Game(_) => "game",
            ExperimentConfig::Scaling(_) => "scaling",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentConfig::CalculusCheck(c) => c.seed,
            ExperimentConfig::Convergence(c) => c.seed,
            ExperimentConfig::Synth(c) => c.seed,
            ExperimentConfig::Game(c) => c.seed,
            ExperimentConfig::Scaling(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        let slot = match self {
            ExperimentConfig::CalculusCheck(c) => &mut c.seed,
            ExperimentConfig::Convergence(c) => &mut c.seed,
            ExperimentConfig::Synth(c) => &mut c.seed,
            ExperimentConfig::Game(c) => &mut c.seed,
            ExperimentConfig::Scaling(c) => &mut c.seed,
        };
        *slot = Some(seed);
    }

    pub fn output(&self) -> Option<&str> {
        match self {
            ExperimentConfig::CalculusCheck(c) => c.output.as_deref(),
            ExperimentConfig::Convergence(c) => c.output.as_deref(),
            ExperimentConfig::Synth(c) => c.output.as_deref(),
            ExperimentConfig::Game(c) => c.output.as_deref(),
            ExperimentConfig::Scaling(c) => c.output.as_deref(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // Errors raised after the study tag is buffered carry no position;
        // point at the key the message names instead.
        let at = if e.line() > 0 {
            Some((e.line(), e.column()))
        } else {
            key_position(text, &msg)
        };
        match at {
            Some((line, col)) => CliError::Config(format!(
                "line {line}, column {col}: {}",
                strip_position(&msg)
            )),
            None => CliError::Config(msg),
        }
    })?;
    validate(&config)?;
    Ok(config)
}

fn strip_position(msg: &str) -> &str {
    msg.find(" at line ").map_or(msg, |i| &msg[..i])
}

/// Line and column of the first quoted key named in backticks in `msg`.
fn key_position(text: &str, msg: &str) -> Option<(usize, usize)> {
    let name = msg.split('`').nth(1)?;
    let offset = text.find(&format!("\"{name}\""))?;
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, col))
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

fn check_eps(field: &str, eps: &[f64]) -> Result<(), CliError> {
    if eps.is_empty() {
        return Err(invalid(field, "needs at least one value"));
    }
    match eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        Some(e) => Err(invalid(field, format!("{e} is outside (0, 1]"))),
        None => Ok(()),
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn check_count(field: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        Err(invalid(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn validate(config: &ExperimentConfig) -> Result<(), CliError> {
    match config {
        ExperimentConfig::CalculusCheck(c) => {
            check_count("instances", c.instances)?;
            check_count("points", c.points)?;
            check_positive("tol", c.tol)?;
        }
        ExperimentConfig::Convergence(c) => {
            c.system.recipe_spec()?;
            check_positive("t_end", c.t_end)?;
            check_count("paths", c.paths)?;
            if c.n_list.len() < 2 || c.n_list.contains(&0) {
                return Err(invalid("n_list", "needs at least two positive step counts"));
            }
            let max = *c.n_list.iter().max().unwrap();
            if c.n_list.iter().any(|n| max % n != 0) {
                return Err(invalid("n_list", "every entry must divide the largest"));
            }
            if let X0::Values(v) = &c.x0 {
                if v.len() != c.system.d {
                    return Err(invalid(
                        "x0",
                        format!("has {} entries for d = {}", v.len(), c.system.d),
                    ));
                }
            }
            if c.slope_window[0] > c.slope_window[1] {
                return Err(invalid("slope_window", "lower end exceeds upper end"));
            }
        }
        ExperimentConfig::Synth(c) => {
            c.system.recipe_spec()?;
            check_eps("eps", &c.eps)?;
            c.plan.check()?;
        }
        ExperimentConfig::Game(c) => {
            check_eps("eps", &[c.eps])?;
            check_count("d", c.d)?;
            check_count("points", c.points)?;
            if c.times.is_empty() || c.times[0] != 0.0 || c.times.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("times", "must start at 0 and be non-decreasing"));
            }
            if c.times.iter().any(|t| *t > c.t_end) {
                return Err(invalid("times", "must lie in [0, t_end]"));
            }
            for (name, set) in [("u1", &c.u1), ("u2", &c.u2)] {
                if set.is_empty() || set.iter().any(|a| a.len() != set[0].len()) {
                    return Err(invalid(name, "needs actions of one common length"));
                }
            }
            if c.payoff.len() != c.u1.len() || c.payoff.iter().any(|r| r.len() != c.u2.len()) {
                return Err(invalid(
                    "payoff",
                    format!("must be {}x{}", c.u1.len(), c.u2.len()),
                ));
            }
            let m = c.u1[0].len() + c.u2[0].len();
            if let Some(b) = &c.control {
                if b.len() != c.d || b.iter().any(|r| r.len() != m) {
                    return Err(invalid("control", format!("must be {}x{m}", c.d)));
                }
            }
            check_positive("t_end", c.t_end)?;
            check_positive("cplan", c.cplan)?;
        }
        ExperimentConfig::Scaling(c) => {
            SystemConfig {
                id: c.system_id.clone(),
                d: 2,
                params: c.params.clone(),
            }
            .recipe_spec()?;
            if c.dims.len() < 2 || c.dims.contains(&0) {
                return Err(invalid("dims", "needs at least two positive dimensions"));
            }
            check_eps("eps_for_dims", &[c.eps_for_dims])?;
            check_eps("eps_list", &c.eps_list)?;
            if c.eps_list.len() < 2 {
                return Err(invalid("eps_list", "needs at least two values"));
            }
            check_count("d_for_eps", c.d_for_eps)?;
            c.plan.check()?;
        }
    }
    Ok(())
}

/// A registry system with optional parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub id: String,
    pub d: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl SystemConfig {
    pub fn new(id: &str, d: usize) -> Self {
        SystemConfig {
            id: id.into(),
            d,
            params: BTreeMap::new(),
        }
    }

    pub fn recipe_spec(&self) -> Result<RecipeSpec, CliError> {
        if self.d == 0 {
            return Err(invalid("system.d", "must be at least 1"));
        }
        let mut spec = RecipeSpec::by_id(&self.id, self.d).map_err(|e| invalid("system.id", e))?;
        for (key, &value) in &self.params {
            let slot = match (&mut spec, key.as_str()) {
                (RecipeSpec::GalerkinHeat { a, .. }, "a") | (RecipeSpec::Ou { a, .. }, "a") => a,
                (RecipeSpec::GalerkinHeat { c, .. }, "c") => c,
                (RecipeSpec::GalerkinHeat { s, .. }, "s")
                | (RecipeSpec::ReluDrift { s, .. }, "s")
                | (RecipeSpec::Ou { s, .. }, "s") => s,
                (RecipeSpec::GalerkinHeat { eta, .. }, "eta")
                | (RecipeSpec::ReluDrift { eta, .. }, "eta")
                | (RecipeSpec::Ou { eta, .. }, "eta") => eta,
                (RecipeSpec::ReluDrift { l_mu, .. }, "l_mu") => l_mu,
                (RecipeSpec::Ou { r, .. }, "r") => r,
                _ => {
                    return Err(invalid(
                        &format!("system.params.{key}"),
                        format!("not a parameter of {}", self.id),
                    ))
                }
            };
            *slot = value;
        }
        Ok(spec)
    }
}

/// Initial state: a named profile or explicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X0 {
    Named(NamedX0),
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedX0 {
    Ones,
    Zeros,
    /// Galerkin coefficients `1/k²`.
    Smooth,
}

impl X0 {
    pub fn resolve(&self, d: usize) -> Vec<f64> {
        match self {
            X0::Named(NamedX0::Ones) => vec![1.0; d],
            X0::Named(NamedX0::Zeros) => vec![0.0; d],
            X0::Named(NamedX0::Smooth) => stiffnet::systems::smooth_profile(d),
            X0::Values(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetOverrides {
    pub n_steps: Option<u64>,
    pub paths: Option<u64>,
}

/// Calibration instance for `Cplan`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub d: usize,
    pub eps: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { d: 2, eps: 0.25 }
    }
}

/// Settings shared by the synthesis-based studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSettings {
    /// Fixed `Cplan`; calibrated when absent.
    pub cplan: Option<f64>,
    pub calibration: CalibrationConfig,
    pub kappa: f64,
    pub t_end: f64,
    pub l2_samples: usize,
    pub reference_paths: usize,
    pub reference_steps: usize,
}

impl Default for PlanSettings {
    fn default() -> Self {
        let o = stiffnet::synth::SynthOptions::default();
        PlanSettings {
            cplan: None,
            calibration: CalibrationConfig::default(),
            kappa: o.kappa,
            t_end: o.t_end,
            l2_samples: o.l2_samples,
            reference_paths: o.reference_paths,
            reference_steps: o.reference_steps,
        }
    }
}

impl PlanSettings {
    fn check(&self) -> Result<(), CliError> {
        if let Some(c) = self.cplan {
            check_positive("cplan", c)?;
        }
        check_count("calibration.d", self.calibration.d)?;
        check_eps("calibration.eps", &[self.calibration.eps])?;
        if self.kappa.is_nan() || self.kappa < 0.0 {
            return Err(invalid("kappa", "must be non-negative"));
        }
        check_positive("t_end", self.t_end)?;
        check_count("l2_samples", self.l2_samples)?;
        check_count("reference_paths", self.reference_paths)?;
        check_count("reference_steps", self.reference_steps)
    }

    pub fn options(&self, seed: u64) -> stiffnet::synth::SynthOptions {
        stiffnet::synth::SynthOptions {
            t_end: self.t_end,
            kappa: self.kappa,
            seed,
            l2_samples: self.l2_samples,
            reference_paths: self.reference_paths,
            reference_steps: self.reference_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalculusCheckConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub instances: usize,
    pub points: usize,
    pub tol: f64,
}

impl Default for CalculusCheckConfig {
    fn default() -> Self {
        CalculusCheckConfig {
            seed: None,
            output: None,
            instances: 50,
            points: 1000,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub system: SystemConfig,
    pub x0: X0,
    pub t_end: f64,
    pub n_list: Vec<usize>,
    pub paths: usize,
    /// Accepted range of the fitted strong slope.
    pub slope_window: [f64; 2],
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            seed: None,
            output: None,
            system: SystemConfig::new("ou_mult", 4),
            x0: X0::Named(NamedX0::Ones),
            t_end: 1.0,
            n_list: vec![8, 16, 32, 64, 128],
            paths: 4096,
            slope_window: [0.4, 0.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub system: SystemConfig,
    pub eps: Vec<f64>,
    pub budget: BudgetOverrides,
    pub plan: PlanSettings,
    /// Write each value network next to the report.
    pub save_networks: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: None,
            output: None,
            system: SystemConfig::new("ou", 4),
            eps: vec![0.25],
            budget: BudgetOverrides::default(),
            plan: PlanSettings::default(),
            save_networks: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub d: usize,
    /// Heat operator scale, drift scale and noise scale of the controlled system.
    pub a: f64,
    pub c: f64,
    pub s: f64,
    pub eta: f64,
    /// `d × (m₁ + m₂)` control matrix; defaults to `B_{ij} = 1` for `i = j mod d`.
    pub control: Option<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    /// Action payoff matrix, averaged over the intervention intervals.
    pub payoff: Vec<Vec<f64>>,
    pub eps: f64,
    pub kappa0: f64,
    pub cplan: f64,
    pub budget: BudgetOverrides,
    pub t_end: f64,
    pub points: usize,
    pub tol: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            seed: None,
            output: None,
            d: 2,
            a: 1.0,
            c: 0.5,
            s: 0.3,
            eta: 0.5,
            control: None,
            times: vec![0.0, 0.5],
            u1: vec![vec![-1.0], vec![1.0]],
            u2: vec![vec![-0.5], vec![0.5]],
            payoff: vec![vec![0.0, 0.1], vec![0.2, 0.0]],
            eps: 0.25,
            kappa0: 1.0,
            cplan: 1048576.0,
            budget: BudgetOverrides {
                n_steps: Some(8),
                paths: Some(16),
            },
            t_end: 1.0,
            points: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub system_id: String,
    pub params: BTreeMap<String, f64>,
    pub dims: Vec<usize>,
    pub eps_for_dims: f64,
    pub eps_list: Vec<f64>,
    pub d_for_eps: usize,
    pub r2_min: f64,
    pub plan: PlanSettings,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            seed: None,
            output: None,
            system_id: "ou".into(),
            params: BTreeMap::new(),
            dims: vec![2, 4, 8, 16],
            eps_for_dims: 0.25,
            eps_list: vec![0.4, 0.2, 0.1],
            d_for_eps: 4,
            r2_min: 0.95,
            plan: PlanSettings::default(),
        }
    }
}
