//! Monte Carlo checks of the scheme's stability, moment, gap and rate results.

use super::stats::{loglog_fit, mean_stderr, LinearFit};
use super::{
    dot, norm2, simulate_driven, simulate_path, Coefficients, EulerConfig, ImplicitFactor,
    PathBundle, Stepper, StiffSystem,
};
use crate::error::{Error, Result};
use nalgebra::DVector;
use rayon::prelude::*;

/// Fine-grid refinement of the strong-rate reference.
pub const REFERENCE_REFINE: usize = 64;

fn per_path<T: Send>(paths: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..paths).into_par_iter().map(f).collect()
}

/// Mean and standard error of each column of `rows`.
fn column_stats(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let width = rows.first().map_or(0, Vec::len);
    let mut col = vec![0.0; rows.len()];
    (0..width)
        .map(|j| {
            for (c, r) in col.iter_mut().zip(rows) {
                *c = r[j];
            }
            mean_stderr(&col)
        })
        .collect()
}

fn worst(stats: &[(f64, f64)]) -> (usize, f64, f64) {
    let mut best = (0, f64::NEG_INFINITY, 0.0);
    for (i, &(m, s)) in stats.iter().enumerate() {
        if m > best.1 {
            best = (i, m, s);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub h: f64,
    pub strong_err: f64,
    pub weak_err: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct StrongRateReport {
    pub rows: Vec<RateRow>,
    pub fit: LinearFit,
    pub n_ref: usize,
    /// The coarsest point was excluded because its error exceeded half the
    /// state magnitude.
    pub discarded_coarsest: bool,
    /// Some fitted error has relative standard error above 20%.
    pub wide_ci: bool,
}

impl StrongRateReport {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }
}

fn check_n_list(n_list: &[usize]) -> Result<usize> {
    if n_list.len() < 2 || n_list.contains(&0) {
        return Err(Error::Param(
            "need at least two positive step counts".into(),
        ));
    }
    let max_n = *n_list.iter().max().expect("non-empty");
    if let Some(bad) = n_list.iter().find(|&&n| !max_n.is_multiple_of(n)) {
        return Err(Error::Param(format!(
            "step count {bad} does not divide {max_n}"
        )));
    }
    Ok(max_n)
}

/// Strong error `max_n (E‖Ỹ_n − Y(t_n)‖²)^{1/2}` of `coeffs` against a
/// same-path reference run of the exact coefficients at
/// `REFERENCE_REFINE · max(N)` steps, and its log-log slope in `h`.
pub fn strong_rate_study(
    sys: &StiffSystem,
    coeffs: &dyn Coefficients,
    x0: &[f64],
    t_end: f64,
    n_list: &[usize],
    paths: &PathBundle,
) -> Result<StrongRateReport> {
    let max_n = check_n_list(n_list)?;
    let n_ref = REFERENCE_REFINE * max_n;
    let ref_cfg = EulerConfig::new(t_end, n_ref);
    let ref_factor = ImplicitFactor::new(&sys.a, ref_cfg.h())?;
    let factors: Vec<ImplicitFactor> = n_list
        .iter()
        .map(|&n| ImplicitFactor::new(&sys.a, t_end / n as f64))
        .collect::<Result<_>>()?;
    let d = sys.d;

    // Per path: ‖Y_ref(t)‖² on the max(N) grid, then err² for each N and n.
    let samples = per_path(paths.paths, |m| {
        let fine = paths.path(m, n_ref, ref_cfg.h());
        let mut reference = vec![0.0; (max_n + 1) * d];
        let fine_incr = |n: usize, db: &mut [f64]| db.copy_from_slice(&fine[n * d..(n + 1) * d]);
        simulate_driven(
            &ref_factor,
            sys.coeffs.as_ref(),
            x0,
            &ref_cfg,
            fine_incr,
            |n, y| {
                if n % REFERENCE_REFINE == 0 {
                    let k = n / REFERENCE_REFINE;
                    reference[k * d..(k + 1) * d].copy_from_slice(y.as_slice());
                }
            },
        )?;
        let mut row: Vec<f64> = (0..=max_n)
            .map(|k| norm2(&reference[k * d..(k + 1) * d]))
            .collect();
        for (&n, factor) in n_list.iter().zip(&factors) {
            let cfg = EulerConfig::new(t_end, n);
            let stride = max_n / n;
            let refine = n_ref / n;
            let start = row.len();
            row.resize(start + n + 1, 0.0);
            // same summation order as `PathBundle::coarse_increment`
            let coarse_incr = |k: usize, db: &mut [f64]| {
                db.iter_mut().for_each(|v| *v = 0.0);
                for j in k * refine..(k + 1) * refine {
                    for (o, f) in db.iter_mut().zip(&fine[j * d..(j + 1) * d]) {
                        *o += f;
                    }
                }
            };
            simulate_driven(factor, coeffs, x0, &cfg, coarse_incr, |k, y| {
                let r = &reference[k * stride * d..(k * stride + 1) * d];
                row[start + k] = y.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            })?;
        }
        Ok(row)
    })?;
    let stats = column_stats(&samples);
    let state_scale = stats[..=max_n]
        .iter()
        .map(|s| s.0)
        .fold(0.0, f64::max)
        .sqrt();

    let mut rows = Vec::new();
    let mut offset = max_n + 1;
    for &n in n_list {
        let (_, ms, se) = worst(&stats[offset..offset + n + 1]);
        let err = ms.sqrt();
        let stderr = if err > 0.0 { se / (2.0 * err) } else { 0.0 };
        rows.push(RateRow {
            n,
            h: t_end / n as f64,
            strong_err: err,
            weak_err: f64::NAN,
            stderr,
        });
        offset += n + 1;
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| rows[i].n);
    let coarsest = order[0];
    let discarded_coarsest = rows.len() > 2 && rows[coarsest].strong_err > 0.5 * state_scale;
    let used: Vec<&RateRow> = order
        .iter()
        .filter(|&&i| !(discarded_coarsest && i == coarsest))
        .map(|&i| &rows[i])
        .collect();
    let hs: Vec<f64> = used.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = used.iter().map(|r| r.strong_err).collect();
    let fit = if errs.iter().all(|&e| e == 0.0) {
        LinearFit {
            slope: 0.0,
            intercept: f64::NEG_INFINITY,
            r2: 1.0,
            slope_se: 0.0,
        }
    } else {
        loglog_fit(&hs, &errs)
    };
    let wide_ci = used
        .iter()
        .any(|r| r.strong_err > 0.0 && r.stderr > 0.2 * r.strong_err);
    Ok(StrongRateReport {
        rows,
        fit,
        n_ref,
        discarded_coarsest,
        wide_ci,
    })
}

/// Target value `E f(Y_T)` for the weak study.
pub enum WeakReference<'a> {
    Exact(f64),
    /// `E f(Y_T)` estimated from exact coefficients at
    /// `REFERENCE_REFINE · max(N)` steps on the same paths.
    FineGrid(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

#[derive(Clone, Debug)]
pub struct WeakRateReport {
    pub rows: Vec<RateRow>,
    pub fit: Option<LinearFit>,
    pub reference: f64,
}

/// Weak error `|E f(Y_T) − E f̃(Ỹ_N)|` for each `N`, where `cost` realizes `f̃`.
#[allow(clippy::too_many_arguments)]
pub fn weak_rate_study(
    sys: &StiffSystem,
    coeffs: &dyn Coefficients,
    cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    reference: WeakReference<'_>,
    x0: &[f64],
    t_end: f64,
    n_list: &[usize],
    paths: &PathBundle,
) -> Result<WeakRateReport> {
    let max_n = check_n_list(n_list)?;
    let n_ref = REFERENCE_REFINE * max_n;
    let ref_factor = match reference {
        WeakReference::FineGrid(_) => Some(ImplicitFactor::new(&sys.a, t_end / n_ref as f64)?),
        WeakReference::Exact(_) => None,
    };
    let factors: Vec<ImplicitFactor> = n_list
        .iter()
        .map(|&n| ImplicitFactor::new(&sys.a, t_end / n as f64))
        .collect::<Result<_>>()?;

    let samples = per_path(paths.paths, |m| {
        let mut row = Vec::with_capacity(n_list.len() + 1);
        row.push(match (&reference, &ref_factor) {
            (WeakReference::FineGrid(f), Some(factor)) => {
                let cfg = EulerConfig::new(t_end, n_ref);
                f(simulate_path(
                    factor,
                    sys.coeffs.as_ref(),
                    x0,
                    &cfg,
                    paths,
                    m,
                    1,
                    |_, _| {},
                )?
                .as_slice())
            }
            _ => 0.0,
        });
        for (&n, factor) in n_list.iter().zip(&factors) {
            let cfg = EulerConfig::new(t_end, n);
            let y = simulate_path(factor, coeffs, x0, &cfg, paths, m, n_ref / n, |_, _| {})?;
            row.push(cost(y.as_slice()));
        }
        Ok(row)
    })?;

    let (ref_value, paired) = match reference {
        WeakReference::Exact(v) => (v, false),
        WeakReference::FineGrid(_) => (column_stats(&samples)[0].0, true),
    };
    let mut rows = Vec::new();
    for (j, &n) in n_list.iter().enumerate() {
        let diffs: Vec<f64> = samples
            .iter()
            .map(|r| {
                if paired {
                    r[j + 1] - r[0]
                } else {
                    r[j + 1] - ref_value
                }
            })
            .collect();
        let (mean, se) = mean_stderr(&diffs);
        rows.push(RateRow {
            n,
            h: t_end / n as f64,
            strong_err: f64::NAN,
            weak_err: mean.abs(),
            stderr: se,
        });
    }
    let positive: Vec<&RateRow> = rows.iter().filter(|r| r.weak_err > 0.0).collect();
    let fit = (positive.len() >= 2).then(|| {
        let hs: Vec<f64> = positive.iter().map(|r| r.h).collect();
        let es: Vec<f64> = positive.iter().map(|r| r.weak_err).collect();
        loglog_fit(&hs, &es)
    });
    Ok(WeakRateReport {
        rows,
        fit,
        reference: ref_value,
    })
}

#[derive(Clone, Debug)]
pub struct GapReport {
    /// `max_n E[‖δY_n‖² + 2h⟨δY_n, AδY_n⟩]`
    pub gap: f64,
    pub stderr: f64,
    pub bound: f64,
    pub gamma: f64,
}

impl GapReport {
    pub fn passed(&self) -> bool {
        self.gap <= self.bound + 3.0 * self.stderr
    }
}

/// Exact and perturbed schemes driven by the same increments; `gamma` is the
/// sup-distance between the two coefficient sets.
pub fn coupled_gap_check(
    sys: &StiffSystem,
    perturbed: &dyn Coefficients,
    gamma: f64,
    x0: &[f64],
    cfg: &EulerConfig,
    paths: &PathBundle,
) -> Result<GapReport> {
    let factor = ImplicitFactor::new(&sys.a, cfg.h())?;
    let h = cfg.h();
    let samples = per_path(paths.paths, |m| {
        let mut exact = Vec::with_capacity(cfg.n_steps + 1);
        simulate_path(
            &factor,
            sys.coeffs.as_ref(),
            x0,
            cfg,
            paths,
            m,
            1,
            |_, y| exact.push(y.clone()),
        )?;
        let mut row = vec![0.0; cfg.n_steps + 1];
        simulate_path(&factor, perturbed, x0, cfg, paths, m, 1, |n, y| {
            let delta = y - &exact[n];
            row[n] = delta.norm_squared() + 2.0 * h * delta.dot(&(&sys.a * &delta));
        })?;
        Ok(row)
    })?;
    let (_, gap, stderr) = worst(&column_stats(&samples));
    Ok(GapReport {
        gap,
        stderr,
        bound: sys.gap_bound(cfg.t_end, gamma),
        gamma,
    })
}

#[derive(Clone, Debug)]
pub struct MomentReport {
    pub p: f64,
    /// `max_n E‖Y_n‖^p`
    pub moment: f64,
    pub moment_stderr: f64,
    pub moment_bound: f64,
    /// `max_n E‖Y_n‖²`
    pub second_moment: f64,
    pub second_stderr: f64,
    pub discrete_bound: f64,
    /// Smallest mean one-step stability margin (right side minus left side).
    pub stability_margin: f64,
    pub stability_stderr: f64,
}

impl MomentReport {
    pub fn moment_ok(&self) -> bool {
        self.moment <= self.moment_bound + 3.0 * self.moment_stderr
    }

    pub fn discrete_ok(&self) -> bool {
        self.second_moment <= self.discrete_bound + 3.0 * self.second_stderr
    }

    pub fn stability_ok(&self) -> bool {
        self.stability_margin >= -3.0 * self.stability_stderr
    }

    pub fn passed(&self) -> bool {
        self.moment_ok() && self.discrete_ok() && self.stability_ok()
    }
}

/// p-th moments along the scheme, the continuous and discrete moment bounds,
/// and the one-step stability inequality for two chains started at `x₀` and
/// `x₀ + shift` that share increments.
pub fn moment_check(
    sys: &StiffSystem,
    x0: &[f64],
    cfg: &EulerConfig,
    paths: &PathBundle,
    p: f64,
) -> Result<MomentReport> {
    let eta = sys.consts.eta;
    if !(2.0..2.0 + eta).contains(&p) {
        return Err(Error::Param(format!(
            "p = {p} outside [2, 2+η) with η = {eta}"
        )));
    }
    let factor = ImplicitFactor::new(&sys.a, cfg.h())?;
    let co = sys.coeffs.as_ref();
    let d = sys.d;
    let h = cfg.h();
    let shift = 0.5 / (d as f64).sqrt();
    let steps = cfg.n_steps;

    // Row layout: ‖Y_n‖^p, ‖Y_n‖², stability margin per step.
    let samples = per_path(paths.paths, |m| {
        let mut row = vec![0.0; 2 * (steps + 1) + steps];
        let mut y1 = DVector::from_column_slice(x0);
        factor.solve_in_place(&mut y1);
        let mut y2 = DVector::from_fn(d, |i, _| x0[i] + shift);
        factor.solve_in_place(&mut y2);
        let (mut s1, mut s2) = (Stepper::new(&factor, co), Stepper::new(&factor, co));
        let (mut mu1, mut mu2) = (vec![0.0; d], vec![0.0; d]);
        let mut db = vec![0.0; d];
        let record = |row: &mut [f64], n: usize, y: &DVector<f64>| {
            let r2 = y.norm_squared();
            row[n] = r2.powf(p / 2.0);
            row[steps + 1 + n] = r2;
        };
        record(&mut row, 0, &y1);
        for n in 0..steps {
            let t = cfg.time(n);
            paths.increment(m, n, h, &mut db);
            let dy = &y1 - &y2;
            co.drift(t, y1.as_slice(), &mut mu1);
            co.drift(t, y2.as_slice(), &mut mu2);
            let dmu: Vec<f64> = mu1.iter().zip(&mu2).map(|(a, b)| a - b).collect();
            let dsig =
                co.diffusion_matrix(t, y1.as_slice()) - co.diffusion_matrix(t, y2.as_slice());
            let rhs = 0.5 * dy.norm_squared()
                + h * (dot(dy.as_slice(), &dmu)
                    + 0.5 * h * norm2(&dmu)
                    + 0.5 * dsig.norm_squared());
            s1.step(&mut y1, t, &db)?;
            s2.step(&mut y2, t, &db)?;
            let dx = &y1 - &y2;
            let lhs = 0.5 * dx.norm_squared() + h * dx.dot(&(&sys.a * &dx));
            // equality cases (linear chains) leave rounding residue only
            let slack = 1e-12 * (rhs.abs() + lhs.abs());
            row[2 * (steps + 1) + n] = if (rhs - lhs).abs() <= slack {
                0.0
            } else {
                rhs - lhs
            };
            record(&mut row, n + 1, &y1);
        }
        Ok(row)
    })?;
    let stats = column_stats(&samples);
    let (_, moment, moment_stderr) = worst(&stats[..=steps]);
    let (_, second_moment, second_stderr) = worst(&stats[steps + 1..2 * (steps + 1)]);
    let mut stability_margin = f64::INFINITY;
    let mut stability_stderr = 0.0;
    for &(m, s) in &stats[2 * (steps + 1)..] {
        if m < stability_margin {
            stability_margin = m;
            stability_stderr = s;
        }
    }
    let x0_norm = norm2(x0).sqrt();
    Ok(MomentReport {
        p,
        moment,
        moment_stderr,
        moment_bound: sys.moment_bound(x0_norm, p, cfg.t_end),
        second_moment,
        second_stderr,
        discrete_bound: sys.scheme_moment_bound(x0_norm, cfg.t_end),
        stability_margin,
        stability_stderr,
    })
}
