use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest step or path count the planner returns; larger demands saturate.
const COUNT_CAP: f64 = (1u64 << 62) as f64;

/// Uniform measure on `[0,1]^d` with moment certificate
/// `∫‖x‖^{4+η} dν ≤ τ d^τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    pub d: usize,
    pub tau: f64,
}

impl Measure {
    /// `τ = 2 + η/2`, since `‖x‖ ≤ √d` on the unit cube.
    pub fn uniform(d: usize, eta: f64) -> Self {
        Measure {
            d,
            tau: 2.0 + eta / 2.0,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..self.d).map(|_| rng.gen::<f64>()).collect())
            .collect()
    }
}

/// Exponents and constants the planner needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanConstants {
    pub eta: f64,
    /// Polynomial growth exponent of the system constants in `d`.
    pub kappa: f64,
    pub tau: f64,
    pub t_end: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisBudget {
    pub eps: f64,
    pub d: usize,
    pub t_end: f64,
    pub n_steps: u64,
    /// Truncation radius `D`.
    pub radius: f64,
    pub delta: f64,
    pub paths: u64,
    pub cplan: f64,
    /// A step or path count hit the planner's cap.
    pub saturated: bool,
}

impl SynthesisBudget {
    pub fn h(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Replaces the step and path counts, moving `D` with the new step.
    pub fn with_counts(mut self, n_steps: Option<u64>, paths: Option<u64>, eta: f64) -> Self {
        if let Some(n) = n_steps {
            assert!(n > 0, "step count must be positive");
            self.n_steps = n;
            self.radius = truncation_radius(self.h(), eta);
        }
        if let Some(m) = paths {
            assert!(m > 0, "path count must be positive");
            self.paths = m;
        }
        self.saturated &= n_steps.is_none() || paths.is_none();
        self
    }
}

/// `D = ⌈h^{−(η+4)/(6η+8)}⌉`
pub fn truncation_radius(h: f64, eta: f64) -> f64 {
    h.powf(-(eta + 4.0) / (6.0 * eta + 8.0)).ceil()
}

/// Smallest step count admitted by the strong and weak rate theorems.
pub fn step_floor(beta: f64, eta: f64, t_end: f64) -> f64 {
    let q = 2f64.powf(1.0 / t_end);
    t_end * ((2.0 * beta + q) / (q - 1.0)).max(1.0 / eta).max(2.0 * eta)
}

fn capped_pow2(n: f64) -> (u64, bool) {
    if n.is_nan() || n >= COUNT_CAP {
        return (1 << 62, true);
    }
    ((n.ceil().max(1.0) as u64).next_power_of_two(), false)
}

fn capped(n: f64) -> (u64, bool) {
    if n.is_nan() || n >= COUNT_CAP {
        return (1 << 62, true);
    }
    (n.ceil().max(1.0) as u64, false)
}

/// Budget meeting
/// `d^{6κ+max(τ,2κ)} h^{2η/(3η+4)} ≤ Cε²`,
/// `δ² d^{4κ} h^{−(η+4)κ/(3η+4)} ≤ Cε²` and
/// `d^{2κ+max(τ/2,2κ)} h^{−(η+4)/(3η+4)} / M ≤ Cε²`,
/// with `N` the smallest power of two above both the first condition and
/// the rate theorems' floor, and `D = ⌈h^{−(η+4)/(6η+8)}⌉`.
pub fn plan_budget(eps: f64, d: usize, pc: &PlanConstants, cplan: f64) -> SynthesisBudget {
    assert!(eps > 0.0 && eps <= 1.0, "ε must lie in (0, 1], got {eps}");
    assert!(cplan > 0.0, "Cplan must be positive");
    let PlanConstants {
        eta,
        kappa,
        tau,
        t_end,
        beta,
    } = *pc;
    let df = d as f64;
    let target = cplan * eps * eps;

    let a1 = 6.0 * kappa + tau.max(2.0 * kappa);
    let h_max = (target / df.powf(a1)).powf((3.0 * eta + 4.0) / (2.0 * eta));
    let n_need = (t_end / h_max).max(step_floor(beta, eta, t_end));
    let (n_steps, sat_n) = capped_pow2(n_need);
    let h = t_end / n_steps as f64;

    let radius = truncation_radius(h, eta);
    let delta = (target
        / (df.powf(4.0 * kappa) * h.powf(-(eta + 4.0) * kappa / (3.0 * eta + 4.0))))
    .sqrt()
    .min(1.0);
    let a3 = 2.0 * kappa + (tau / 2.0).max(2.0 * kappa);
    let (paths, sat_m) = capped(df.powf(a3) * h.powf(-(eta + 4.0) / (3.0 * eta + 4.0)) / target);

    SynthesisBudget {
        eps,
        d,
        t_end,
        n_steps,
        radius,
        delta,
        paths,
        cplan,
        saturated: sat_n || sat_m,
    }
}

/// Accuracy parameter of the quadratic cost network: the network error
/// `‖β‖_∞ d D² ε_cost` is held at `min(δ, ε/4)·(dD)^κ`.
pub fn cost_accuracy(budget: &SynthesisBudget, beta_sup: f64, kappa: f64) -> f64 {
    let d = budget.d as f64;
    let theta = budget.delta.min(budget.eps / 4.0) * (d * budget.radius).powf(kappa);
    (theta / (beta_sup * d * budget.radius * budget.radius)).min(0.49)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(eta: f64, kappa: f64, tau: f64) -> PlanConstants {
        PlanConstants {
            eta,
            kappa,
            tau,
            t_end: 1.0,
            beta: 0.0,
        }
    }

    #[test]
    fn radius_example() {
        // η = 1, h = 0.01
        assert_eq!(truncation_radius(0.01, 1.0), 6.0);
    }

    #[test]
    fn floor_dominates_trivial_case() {
        let b = plan_budget(1.0, 1, &consts(1.0, 1.0, 1.0), 1.0);
        assert_eq!(step_floor(0.0, 1.0, 1.0), 2.0);
        assert_eq!(b.n_steps, 2);
    }

    #[test]
    fn halving_eps_bounds_step_growth() {
        let pc = consts(0.5, 0.0, 2.25);
        for c in [1e3, 1e5, 1e7] {
            let a = plan_budget(0.2, 4, &pc, c);
            let b = plan_budget(0.1, 4, &pc, c);
            let cap = 2u64.pow(((3.0 * 0.5 + 4.0) / 0.5f64).ceil() as u32);
            assert!(b.n_steps <= a.n_steps * cap);
        }
    }

    #[test]
    fn saturation_is_flagged() {
        let b = plan_budget(0.01, 64, &consts(0.5, 2.0, 2.25), 1e-6);
        assert!(b.saturated);
        assert!(b.n_steps.is_power_of_two());
    }
}
