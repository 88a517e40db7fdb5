use super::{dot, norm2, op_norm, StiffSystem};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst sampled margins of the structural hypotheses. A negative margin is
/// a violation; `witness` holds the offending `(t, x, y)` of the worst
/// monotonicity sample.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub monotone_margin: f64,
    pub witness: Option<(f64, Vec<f64>, Vec<f64>)>,
    /// Largest sampled `‖Δμ‖ / (√|t−s| + ‖x−y‖)`.
    pub mu1_observed: f64,
    pub sigma1_observed: f64,
    pub mu0_observed: f64,
    pub sigma0_observed: f64,
    /// Smallest sampled `⟨x,Ax⟩/‖x‖²`.
    pub min_quadratic_form: f64,
    pub op_norm: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn frob2_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Samples `trials` pairs on `[0,T] × [−radius, radius]^d`; half of the pairs
/// are close together to probe local behaviour.
pub fn validate_system(
    sys: &StiffSystem,
    trials: usize,
    t_end: f64,
    radius: f64,
    seed: u64,
) -> ValidationReport {
    assert!(trials >= 1, "need at least one trial");
    let d = sys.d;
    let c = &sys.consts;
    let co = sys.coeffs.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-9;

    let mut report = ValidationReport {
        monotone_margin: f64::INFINITY,
        witness: None,
        mu1_observed: 0.0,
        sigma1_observed: 0.0,
        mu0_observed: 0.0,
        sigma0_observed: 0.0,
        min_quadratic_form: f64::INFINITY,
        op_norm: op_norm(&sys.a),
        failures: Vec::new(),
    };

    let (mut mx, mut my) = (vec![0.0; d], vec![0.0; d]);
    let zero = vec![0.0; d];
    for k in 0..trials {
        let t = rng.gen_range(0.0..=t_end);
        let s = rng.gen_range(0.0..=t_end);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
        let y: Vec<f64> = if k % 2 == 0 {
            (0..d).map(|_| rng.gen_range(-radius..=radius)).collect()
        } else {
            x.iter()
                .map(|v| v + rng.gen_range(-1e-3..=1e-3) * radius)
                .collect()
        };
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dn2 = norm2(&diff);
        if dn2 == 0.0 {
            continue;
        }

        co.drift(t, &x, &mut mx);
        co.drift(t, &y, &mut my);
        let dmu: Vec<f64> = mx.iter().zip(&my).map(|(a, b)| a - b).collect();
        let sx = co.diffusion_matrix(t, &x);
        let sy = co.diffusion_matrix(t, &y);
        let dsig2 = frob2_diff(&sx, &sy);
        let adiff = &sys.a * DVector::from_column_slice(&diff);
        let xa = dot(&diff, adiff.as_slice());
        let lhs = dot(&diff, &dmu) + c.eta * norm2(&dmu) + (1.0 + c.eta) / 2.0 * dsig2;
        let rhs = c.beta * dn2 + xa;
        let margin = (rhs - lhs) / dn2;
        if margin < report.monotone_margin {
            report.monotone_margin = margin;
            report.witness = Some((t, x.clone(), y.clone()));
        }
        report.min_quadratic_form = report.min_quadratic_form.min(xa / dn2);

        // regularity across (t, x) and (s, y)
        co.drift(s, &y, &mut my);
        let sy = co.diffusion_matrix(s, &y);
        let denom = (t - s).abs().sqrt() + dn2.sqrt();
        let dmu_ts: f64 = mx
            .iter()
            .zip(&my)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        report.mu1_observed = report.mu1_observed.max(dmu_ts / denom);
        report.sigma1_observed = report
            .sigma1_observed
            .max(frob2_diff(&sx, &sy).sqrt() / denom);

        co.drift(t, &zero, &mut mx);
        report.mu0_observed = report.mu0_observed.max(norm2(&mx).sqrt());
        report.sigma0_observed = report
            .sigma0_observed
            .max(co.diffusion_matrix(t, &zero).norm());
    }

    let slack = |v: f64| tol * (1.0 + v.abs());
    if report.monotone_margin < -slack(c.beta) {
        let (t, x, y) = report.witness.as_ref().expect("margin set with witness");
        report.failures.push(format!(
            "monotonicity violated by {:.3e} at t = {t}, x = {x:?}, y = {y:?}",
            -report.monotone_margin
        ));
    }
    if report.min_quadratic_form < -slack(report.op_norm) {
        report.failures.push(format!(
            "⟨x,Ax⟩ < 0 (ratio {:.3e})",
            report.min_quadratic_form
        ));
    }
    let a_cap = c.kappa0 * (d as f64).powf(c.kappa0);
    if report.op_norm > a_cap * (1.0 + 1e-12) {
        report
            .failures
            .push(format!("‖A‖ = {} exceeds κ₀d^κ₀ = {a_cap}", report.op_norm));
    }
    for (name, v) in [
        ("[μ]₀", c.mu0),
        ("[μ]₁", c.mu1),
        ("[σ]₀", c.sigma0),
        ("[σ]₁", c.sigma1),
    ] {
        if v > a_cap * (1.0 + 1e-12) {
            report
                .failures
                .push(format!("{name} = {v} exceeds κ₀d^κ₀ = {a_cap}"));
        }
    }
    for (name, seen, claimed) in [
        ("[μ]₁", report.mu1_observed, c.mu1),
        ("[σ]₁", report.sigma1_observed, c.sigma1),
        ("[μ]₀", report.mu0_observed, c.mu0),
        ("[σ]₀", report.sigma0_observed, c.sigma0),
    ] {
        if seen > claimed + slack(claimed) {
            report
                .failures
                .push(format!("{name}: sampled {seen} exceeds declared {claimed}"));
        }
    }
    report
}
