//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL without failing the
//! run; every other FAIL makes the process exit non-zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;
use stiffnet::calculus::{
    add_compose, add_compose_width_condition, combine, compose, extend_depth, identity_net,
    max_tree, min_tree, parallel_shared, square_unit_net, weighted_square_net, widen_layer,
    WEIGHTED_SQUARE_CONST,
};
use stiffnet::game::{brute_force_game_value, game_value_net, StrategyGrid};
use stiffnet::nn::{fold_affine, Layer, Matrix, Network, Side};
use stiffnet::sde::{
    coupled_gap_check, moment_check, strong_rate_study, EulerConfig, ImplicitFactor, PathBundle,
    Perturbed,
};
use stiffnet::synth::{
    calibrate, default_cplan_grid, mc_reference, synth_row, unroll_value_net, CoefficientNets,
    SynthOptions,
};
use stiffnet::systems::{
    make_controlled_heat, make_galerkin_heat, make_ou, make_quadratic_cost, smooth_profile,
    DiagonalRelu, NoiseKind, RecipeSpec,
};

/// Criteria that cannot be met at desk scale; see the README.
const KNOWN_RED: [u32; 1] = [10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Row-major copy of a network, evaluated by a plain loop.
struct Dense {
    layers: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
}

impl Dense {
    fn of(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                (
                    l.weight().rows(),
                    l.weight().cols(),
                    l.weight().to_row_major(),
                    l.bias().to_vec(),
                )
            })
            .collect();
        Dense { layers }
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, (rows, cols, w, b)) in self.layers.iter().enumerate() {
            let mut out = b.clone();
            for i in 0..*rows {
                for j in 0..*cols {
                    out[i] += w[i * cols + j] * v[j];
                }
            }
            if k < last {
                out.iter_mut().for_each(|o| *o = o.max(0.0));
            }
            v = out;
        }
        v
    }
}

fn rand_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> Network {
    let layers = dims
        .windows(2)
        .map(|w| {
            let rows: Vec<Vec<f64>> = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
            Layer::dense(&rows, bias).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

fn rand_dims(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![n_in];
    dims.extend((1..depth).map(|_| rng.gen_range(1..=5)));
    dims.push(n_out);
    dims
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| rand_vec(rng, cols, 1.0)).collect()
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Size of the two-layer identity network on `R^d`.
fn id2_size(d: u128) -> u128 {
    2 * d * (d + 1) + d * (2 * d + 1)
}

/// `8ⁿ(C + 34/7) − 34/7` in integers.
fn max_tree_bound(n: u32, c: u128) -> u128 {
    (8u128.pow(n) * (7 * c + 34) - 34) / 7
}

/// Linear-implicit Euler endpoint for elementwise piecewise-linear
/// coefficients, solved with a fresh LU of `I + hA`.
fn pes_endpoint(
    co: &DiagonalRelu,
    a: &DMatrix<f64>,
    cfg: EulerConfig,
    paths: &PathBundle,
    m: usize,
    x: &[f64],
) -> Vec<f64> {
    let d = x.len();
    let h = cfg.h();
    let lu = (DMatrix::identity(d, d) + a * h).lu();
    let relu = |v: f64| v.max(0.0);
    let mut y = lu.solve(&DVector::from_column_slice(x)).unwrap();
    let mut db = vec![0.0; d];
    for n in 0..cfg.n_steps {
        let t = n as f64 * h;
        paths.increment(m, n, h, &mut db);
        let rhs = DVector::from_fn(d, |i, _| {
            let v = y[i];
            let mu = co.mu_pos * relu(v) + co.mu_neg * relu(-v) + co.mu_time * t;
            let sig = co.sig_pos * relu(v) + co.sig_neg * relu(-v) + co.sig_const;
            v + h * mu + sig * db[i]
        });
        y = lu.solve(&rhs).unwrap();
    }
    y.as_slice().to_vec()
}

/// `E Σ β_i Y_i²` for `A = aI`, `μ = 0`, `σ = sI` on `[0, T]`.
fn ou_value(a: f64, s: f64, beta: &[f64], x: &[f64], t: f64) -> f64 {
    let decay = (-2.0 * a * t).exp();
    let var = if a == 0.0 {
        s * s * t
    } else {
        s * s * (1.0 - decay) / (2.0 * a)
    };
    beta.iter()
        .zip(x)
        .map(|(b, v)| b * (decay * v * v + var))
        .sum()
}

fn fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

// ---------------------------------------------------------------------------
// Criteria 1 and 2 share one randomized driver.

type VecFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

struct Built {
    net: Network,
    want: VecFn,
    /// `(label, bound)` for operations with a size inequality.
    bound: Option<(&'static str, u128)>,
}

const OPS: [&str; 10] = [
    "compose",
    "combine",
    "parallel_shared",
    "add_compose",
    "max_tree",
    "min_tree",
    "fold_affine",
    "identity",
    "extend",
    "widen",
];

fn build(op: &str, rng: &mut ChaCha8Rng) -> Built {
    let d = rng.gen_range(1..=4);
    let depth = rng.gen_range(1..=4);
    match op {
        "compose" => {
            let mid = rng.gen_range(1..=4);
            let inner = {
                let dims = rand_dims(rng, d, mid, depth);
                rand_net(rng, &dims)
            };
            let od = rng.gen_range(1..=4);
            let outer = {
                let dims = rand_dims(rng, mid, 2, od);
                rand_net(rng, &dims)
            };
            let net = compose(&outer, &inner).unwrap();
            let bound = 2 * (outer.size() + inner.size());
            let (o, i) = (Dense::of(&outer), Dense::of(&inner));
            Built {
                net,
                want: Box::new(move |x| o.eval(&i.eval(x))),
                bound: Some(("compose", bound)),
            }
        }
        "combine" => {
            let m = rng.gen_range(1..=5);
            let dims = rand_dims(rng, d, 2, depth);
            let nets: Vec<Network> = (0..m).map(|_| rand_net(rng, &dims)).collect();
            let c = rand_vec(rng, m, 2.0);
            let net = combine(&c, &nets).unwrap();
            let bound = (m as u128).pow(2) * nets[0].size();
            let dense: Vec<Dense> = nets.iter().map(Dense::of).collect();
            let want = move |x: &[f64]| {
                dense.iter().zip(&c).fold(vec![0.0; 2], |acc, (n, w)| {
                    acc.iter().zip(n.eval(x)).map(|(a, v)| a + w * v).collect()
                })
            };
            Built {
                net,
                want: Box::new(want),
                bound: Some(("combine", bound)),
            }
        }
        "parallel_shared" => {
            let k = rng.gen_range(1..=3);
            let dims = rand_dims(rng, d, k, depth);
            let (a, b) = (rand_net(rng, &dims), rand_net(rng, &dims));
            let net = parallel_shared(&a, &b).unwrap();
            let (da, db) = (Dense::of(&a), Dense::of(&b));
            Built {
                net,
                want: Box::new(move |x| [da.eval(x), db.eval(x)].concat()),
                bound: None,
            }
        }
        "add_compose" => {
            let du = rng.gen_range(0..=2);
            let base = {
                let dims = rand_dims(rng, d, d, depth);
                rand_net(rng, &dims)
            };
            let bd = rng.gen_range(1..=3);
            let bdims = rand_dims(rng, d + du, d, bd);
            let k = rng.gen_range(1..=3);
            let branches: Vec<Network> = (0..k).map(|_| rand_net(rng, &bdims)).collect();
            let u = rand_vec(rng, du, 1.0);
            let net = add_compose(&base, &branches, &u).unwrap();
            let bound = add_compose_width_condition(&base, &branches).then(|| {
                let sup = branches.iter().map(Network::size).max().unwrap();
                (
                    "add_compose",
                    base.size() + (k as u128).pow(2) * (sup + id2_size(d as u128)).pow(3),
                )
            });
            let db = Dense::of(&base);
            let dbr: Vec<Dense> = branches.iter().map(Dense::of).collect();
            let want = move |x: &[f64]| {
                let y = db.eval(x);
                let z = [y.clone(), u.clone()].concat();
                dbr.iter().fold(y, |acc, b| add(&acc, &b.eval(&z)))
            };
            Built {
                net,
                want: Box::new(want),
                bound,
            }
        }
        "max_tree" | "min_tree" => {
            let n = rng.gen_range(0..=3u32);
            let dims = rand_dims(rng, d, 1, depth);
            let nets: Vec<Network> = (0..1usize << n).map(|_| rand_net(rng, &dims)).collect();
            let is_max = op == "max_tree";
            let net = if is_max {
                max_tree(&nets)
            } else {
                min_tree(&nets)
            }
            .unwrap();
            let bound = max_tree_bound(n, nets[0].size());
            let dense: Vec<Dense> = nets.iter().map(Dense::of).collect();
            let want = move |x: &[f64]| {
                let vals = dense.iter().map(|n| n.eval(x)[0]);
                vec![if is_max {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.fold(f64::INFINITY, f64::min)
                }]
            };
            Built {
                net,
                want: Box::new(want),
                bound: Some(if is_max {
                    ("max_tree", bound)
                } else {
                    ("min_tree", bound)
                }),
            }
        }
        "fold_affine" => {
            let base = {
                let dims = rand_dims(rng, d, 2, depth);
                rand_net(rng, &dims)
            };
            let dbase = Dense::of(&base);
            let k = rng.gen_range(1..=4);
            if rng.gen_bool(0.5) {
                let m = rand_matrix(rng, d, k);
                let c = rand_vec(rng, d, 1.0);
                let net = fold_affine(&base, Side::Pre, &Matrix::from_rows(&m), &c).unwrap();
                Built {
                    net,
                    want: Box::new(move |x| dbase.eval(&add(&mat_vec(&m, x), &c))),
                    bound: None,
                }
            } else {
                let m = rand_matrix(rng, k, 2);
                let c = rand_vec(rng, k, 1.0);
                let net = fold_affine(&base, Side::Post, &Matrix::from_rows(&m), &c).unwrap();
                Built {
                    net,
                    want: Box::new(move |x| add(&mat_vec(&m, &dbase.eval(x)), &c)),
                    bound: None,
                }
            }
        }
        "identity" => Built {
            net: identity_net(d, depth),
            want: Box::new(|x| x.to_vec()),
            bound: None,
        },
        "extend" => {
            let base = {
                let dims = rand_dims(rng, d, 2, depth);
                rand_net(rng, &dims)
            };
            let extra = rng.gen_range(1..=3);
            let net = extend_depth(&base, depth + extra).unwrap();
            let dbase = Dense::of(&base);
            Built {
                net,
                want: Box::new(move |x| dbase.eval(x)),
                bound: None,
            }
        }
        "widen" => {
            let base = {
                let dims = rand_dims(rng, d, 2, depth.max(2));
                rand_net(rng, &dims)
            };
            let l = rng.gen_range(1..base.depth());
            let net = widen_layer(&base, l).unwrap();
            let dbase = Dense::of(&base);
            Built {
                net,
                want: Box::new(move |x| dbase.eval(x)),
                bound: None,
            }
        }
        _ => unreachable!(),
    }
}

fn criteria_1_2() -> (Outcome, Outcome) {
    let mut worst: f64 = 0.0;
    let mut worst_op = "";
    let mut checked = 0usize;
    let mut violations = Vec::new();
    for (k, op) in OPS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        for _ in 0..50 {
            let b = build(op, &mut rng);
            if let Some((label, bound)) = b.bound {
                checked += 1;
                if b.net.size() > bound {
                    violations.push(format!("{label}: {} > {bound}", b.net.size()));
                }
            }
            let dense = Dense::of(&b.net);
            for _ in 0..10_000 {
                let x = rand_vec(&mut rng, b.net.dim_in(), 2.0);
                let got = b.net.eval(&x);
                let naive = dense.eval(&x);
                let want = (b.want)(&x);
                for ((g, n), w) in got.iter().zip(&naive).zip(&want) {
                    let e = rel(*g, *w).max(rel(*n, *w));
                    if e > worst {
                        worst = e;
                        worst_op = op;
                    }
                }
            }
        }
    }
    // Weighted square cost network.
    for d in 1..=8usize {
        for eps in [0.49, 0.3, 0.1, 1e-2, 1e-3, 1e-6] {
            let (_, net) = weighted_square_net(&vec![1.0; d], 2.0, eps).unwrap();
            let bound = (WEIGHTED_SQUARE_CONST * (d * d) as f64 * (1.0 / eps).ln() + d as f64 + 1.0)
                .floor() as u128;
            checked += 1;
            if net.size() > bound {
                violations.push(format!(
                    "weighted square d={d} eps={eps}: {} > {bound}",
                    net.size()
                ));
            }
        }
    }
    let c1 = outcome(
        worst <= 1e-12,
        format!("worst relative error {worst:.2e} ({worst_op}), 500 instances x 1e4 points"),
    );
    let c2 = outcome(
        violations.is_empty(),
        if violations.is_empty() {
            format!("{checked} size inequalities hold")
        } else {
            format!("{} violations, first: {}", violations.len(), violations[0])
        },
    );
    (c1, c2)
}

fn criterion_3() -> Outcome {
    let mut fails = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let net = square_unit_net(eps).unwrap();
        let steps = 1usize << 18;
        let sup = (0..=steps)
            .map(|k| {
                let x = k as f64 / steps as f64;
                (net.eval(&[x])[0] - x * x).abs()
            })
            .fold(0.0, f64::max);
        if sup > eps {
            fails.push(format!("eps {eps}: sup error {sup:.3e}"));
        }
    }
    let net = square_unit_net(1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = if rng.gen_bool(0.5) {
            rng.gen_range(-50.0..0.0)
        } else {
            rng.gen_range(1.0..50.0) + f64::EPSILON
        };
        if net.eval(&[x])[0] != x {
            fails.push(format!("identity fails at {x}"));
        }
    }
    if net.eval(&[0.0])[0] != 0.0 {
        fails.push("nonzero at 0".into());
    }
    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            "grid sup error within eps; identity outside [0,1]; zero at 0".into()
        } else {
            fails.join("; ")
        },
    )
}

fn criterion_4() -> Outcome {
    let d = 32;
    let recipe = make_galerkin_heat(d, 1.0, 0.5, 0.3, NoiseKind::Additive, 0.5).unwrap();
    let a = &recipe.system.a;
    let lam_max = a[(d - 1, d - 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut bad, mut worst_solve) = (0usize, 0.0f64);
    let hs = [1e-7, 1e-5, 1e-3, 1e-1, 10.0];
    for &h in &hs {
        let factor = ImplicitFactor::new(a, h).unwrap();
        for _ in 0..200 {
            let r = rand_vec(&mut rng, d, 10.0);
            let z = factor.solve(&r);
            let hz = (a * DVector::from_column_slice(&z)) * h;
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if zn > rn || hz.norm() > rn {
                bad += 1;
            }
            for i in 0..d {
                let exact = r[i] / (1.0 + h * a[(i, i)]);
                worst_solve = worst_solve.max((z[i] - exact).abs() / exact.abs().max(1e-300));
            }
        }
    }
    outcome(
        bad == 0 && worst_solve <= 1e-14,
        format!(
            "1000 probes, h*lambda_max in [{:.1e}, {:.1e}]: {bad} violations, solve vs diagonal formula {worst_solve:.1e}",
            hs[0] * lam_max,
            hs[hs.len() - 1] * lam_max
        ),
    )
}

fn criterion_5() -> Outcome {
    let n_list = [8, 16, 32, 64, 128];
    let heat = RecipeSpec::by_id("galerkin_heat_mult", 8)
        .unwrap()
        .build()
        .unwrap();
    let ou = RecipeSpec::by_id("ou_mult", 4).unwrap().build().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, r, x0) in [
        ("galerkin_heat_mult d=8", &heat, smooth_profile(8)),
        ("ou_mult d=4", &ou, vec![1.0; 4]),
    ] {
        let paths = PathBundle::new(42, 4096, r.system.d);
        let rep = strong_rate_study(
            &r.system,
            r.system.coeffs.as_ref(),
            &x0,
            1.0,
            &n_list,
            &paths,
        )
        .unwrap();
        let hs: Vec<f64> = rep.rows.iter().map(|row| row.h.ln()).collect();
        let es: Vec<f64> = rep.rows.iter().map(|row| row.strong_err.ln()).collect();
        let (slope, _) = fit(&hs, &es);
        pass &= (0.4..=0.6).contains(&slope);
        parts.push(format!("{name} slope {slope:.3}"));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let systems = [
        make_galerkin_heat(8, 1.0, 0.5, 0.3, NoiseKind::Additive, 0.5).unwrap(),
        make_ou(4, 1.0, 1.0, 1.0, 0.5).unwrap(),
    ];
    for r in &systems {
        let d = r.system.d;
        let cfg = EulerConfig::new(1.0, 32);
        let paths = PathBundle::new(6, 2048, d);
        let c = &r.system.consts;
        for gamma in [0.0, 0.01, 0.02] {
            let pert = Perturbed::new(r.system.coeffs.clone(), gamma, 0.5);
            let rep =
                coupled_gap_check(&r.system, &pert, gamma, &vec![1.0; d], &cfg, &paths).unwrap();
            let bound = ((2.0 * c.beta + 1.0) * cfg.t_end).exp()
                * cfg.t_end
                * (1.0 + c.eta)
                * gamma
                * gamma
                / c.eta;
            let ok = if gamma == 0.0 {
                rep.gap == 0.0
            } else {
                rep.gap <= bound + 3.0 * rep.stderr
            };
            pass &= ok && (pert.distance() - gamma).abs() <= 1e-15;
            parts.push(format!(
                "{} g={gamma}: {:.2e}<={:.2e}",
                r.id, rep.gap, bound
            ));
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let systems = [
        make_ou(4, 1.0, 1.0, 0.0, 0.5).unwrap(),
        make_galerkin_heat(8, 1.0, 0.5, 0.3, NoiseKind::Additive, 0.5).unwrap(),
    ];
    for r in &systems {
        let d = r.system.d;
        let c = &r.system.consts;
        let x0 = vec![1.0; d];
        let x0n = (d as f64).sqrt();
        let cfg = EulerConfig::new(1.0, 32);
        let paths = PathBundle::new(7, 2048, d);
        for p in [2.0, 2.4] {
            let rep = moment_check(&r.system, &x0, &cfg, &paths, p).unwrap();
            let alpha_p = (0.5 + c.eta * (p - 2.0) / (c.eta + 2.0 - p)) * c.mu0.powi(2)
                + (1.0 + c.eta) * (p - 1.0) / (2.0 * (c.eta + 2.0 - p)) * c.sigma0.powi(2);
            let moment_bound =
                2f64.powf((p - 2.0) / 2.0) * (alpha_p + x0n.powf(p)) * (p * (c.beta + 0.5)).exp();
            let alpha_1 = (1.0 + c.eta).powi(2) / c.eta * (c.mu0.powi(2) + c.sigma0.powi(2));
            let discrete_bound = 3.0 * (2.0 * c.beta + 1.0).exp() * (x0n * x0n + alpha_1);
            let formulas = rel(rep.moment_bound, moment_bound) < 1e-12
                && rel(rep.discrete_bound, discrete_bound) < 1e-12;
            let ok = formulas
                && rep.moment <= moment_bound + 3.0 * rep.moment_stderr
                && rep.second_moment <= discrete_bound + 3.0 * rep.second_stderr
                && rep.stability_ok();
            pass &= ok;
            parts.push(format!(
                "{} p={p}: {:.3}<={:.3}",
                r.id, rep.moment, moment_bound
            ));
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for id in ["galerkin_heat", "relu_drift", "ou_mult"] {
        for d in [2usize, 8] {
            let r = RecipeSpec::by_id(id, d).unwrap().build().unwrap();
            let cost = make_quadratic_cost(&vec![1.0 / d as f64; d], 4.0, 0.01).unwrap();
            let dense_cost = Dense::of(&cost.net);
            let nets = CoefficientNets::new(r.mu_net.clone(), r.sigma_cols.clone(), 0).unwrap();
            for n in [4usize, 16] {
                for m in [8usize, 64] {
                    let cfg = EulerConfig::new(1.0, n);
                    let paths = PathBundle::new(8 + cases as u64, m, d);
                    let (psi, _) =
                        unroll_value_net(&nets, &r.system.a, &cost.net, cfg, &paths).unwrap();
                    let mut rng = ChaCha8Rng::seed_from_u64(80 + cases as u64);
                    let f = |y: &[f64]| cost.net.eval(y)[0];
                    for _ in 0..100 {
                        let x = rand_vec(&mut rng, d, 1.0);
                        let got = psi.eval(&x)[0];
                        let reference = mc_reference(
                            &r.system.a,
                            r.system.coeffs.as_ref(),
                            &f,
                            cfg,
                            &paths,
                            &x,
                        )
                        .unwrap();
                        let own = (0..m)
                            .map(|k| {
                                dense_cost.eval(&pes_endpoint(
                                    &r.coeffs,
                                    &r.system.a,
                                    cfg,
                                    &paths,
                                    k,
                                    &x,
                                ))[0]
                            })
                            .sum::<f64>()
                            / m as f64;
                        worst = worst.max(rel(got, reference)).max(rel(got, own));
                    }
                    cases += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{cases} configurations x 100 points, worst relative gap {worst:.2e}"),
    )
}

fn calibrated_cplan(opts: &SynthOptions) -> f64 {
    let r2 = make_ou(2, 1.0, 1.0, 0.0, 0.5).unwrap();
    calibrate(&r2, 0.25, &default_cplan_grid(), opts)
        .unwrap()
        .0
        .expect("calibration finds an admissible Cplan")
}

fn criterion_9(cplan: f64, opts: &SynthOptions) -> Outcome {
    let d = 4;
    let r = make_ou(d, 1.0, 1.0, 0.0, 0.5).unwrap();
    let (row, synth) = synth_row(&r, 0.25, cplan, opts).unwrap();
    let beta = vec![1.0 / d as f64; d];
    let s = 1.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 4000;
    let ms = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            (synth.psi.eval(&x)[0] - ou_value(1.0, s, &beta, &x, 1.0)).powi(2)
        })
        .sum::<f64>()
        / n as f64;
    let l2 = ms.sqrt();
    outcome(
        l2 <= 0.25,
        format!(
            "Cplan {cplan:e}, N={} M={} size {}: L2 error {l2:.4} (library estimate {:.4})",
            row.budget.n_steps, row.budget.paths, row.net_size, row.l2_error
        ),
    )
}

fn criterion_10(cplan: f64, opts: &SynthOptions) -> Outcome {
    let size = |d: usize, eps: f64| {
        let r = make_ou(d, 1.0, 1.0, 0.0, 0.5).unwrap();
        synth_row(&r, eps, cplan, opts).unwrap().0.net_size as f64
    };
    let dims = [2usize, 4, 8, 16];
    let ds: Vec<f64> = dims.iter().map(|&d| size(d, 0.25)).collect();
    let (slope_d, r2_d) = fit(
        &dims.map(|d| (d as f64).ln()),
        &ds.iter().map(|s| s.ln()).collect::<Vec<_>>(),
    );
    let epss = [0.4, 0.2, 0.1];
    let es: Vec<f64> = epss.iter().map(|&e| size(4, e)).collect();
    let (slope_e, r2_e) = fit(
        &epss.map(|e| (1.0 / e).ln()),
        &es.iter().map(|s| s.ln()).collect::<Vec<_>>(),
    );
    let ok_d = slope_d.is_finite() && r2_d >= 0.95;
    let ok_e = slope_e.is_finite() && r2_e >= 0.95;
    outcome(
        ok_d && ok_e,
        format!(
            "d sweep sizes {ds:?}: slope {slope_d:.3} R2 {r2_d:.4}; 1/eps sweep sizes {es:?}: slope {slope_e:.3} R2 {r2_e:.4}"
        ),
    )
}

fn criterion_11() -> Outcome {
    let d = 2;
    let b = DMatrix::identity(d, 2);
    let r = make_controlled_heat(d, 1.0, 0.5, 0.3, b, 0.5).unwrap();
    let grid = StrategyGrid::new(
        vec![0.0, 0.5],
        vec![vec![-1.0], vec![1.0]],
        vec![vec![-0.5], vec![0.5]],
        StrategyGrid::matrix_payoff(vec![vec![0.0, 0.1], vec![0.2, 0.0]]),
    )
    .unwrap();
    let cost = make_quadratic_cost(&vec![0.5; d], 4.0, 0.01).unwrap();
    let nets = CoefficientNets::new(r.mu_net.clone(), r.sigma_cols.clone(), 2).unwrap();
    let cfg = EulerConfig::new(1.0, 8);
    let paths = PathBundle::new(11, 16, d);
    let (psi, _) = game_value_net(&nets, &grid, &r.system.a, &cost.net, cfg, &paths).unwrap();
    let f = |y: &[f64]| cost.net.eval(y)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = rand_vec(&mut rng, d, 1.0);
        let bf =
            brute_force_game_value(&r.coeffs, &grid, &r.system.a, &f, cfg, &paths, &x).unwrap();
        worst = worst.max(rel(psi.eval(&x)[0], bf));
    }

    // Frozen dynamics, zero cost: the value is the matrix game's upper value.
    let mut frozen = DiagonalRelu::new(d);
    frozen.control = DMatrix::zeros(d, 2);
    let (mu_net, sigma_cols) = frozen.networks();
    let nets0 = CoefficientNets::new(mu_net, sigma_cols, 2).unwrap();
    let grid0 = StrategyGrid::new(
        vec![0.0],
        vec![vec![0.0], vec![0.0]],
        vec![vec![0.0], vec![0.0]],
        StrategyGrid::matrix_payoff(vec![vec![1.0, 4.0], vec![3.0, 2.0]]),
    )
    .unwrap();
    let zero_cost = Network::affine(Matrix::zeros(1, d), vec![0.0]).unwrap();
    let a0 = DMatrix::zeros(d, d);
    let paths0 = PathBundle::new(12, 2, d);
    let (psi0, _) = game_value_net(&nets0, &grid0, &a0, &zero_cost, cfg, &paths0).unwrap();
    let matrix_ok = (0..10).all(|_| {
        let x = rand_vec(&mut rng, d, 3.0);
        let bf = brute_force_game_value(&frozen, &grid0, &a0, &|_| 0.0, cfg, &paths0, &x).unwrap();
        (psi0.eval(&x)[0] - 3.0).abs() <= 1e-12 && (bf - 3.0).abs() <= 1e-12
    });
    outcome(
        worst <= 1e-8 && matrix_ok,
        format!(
            "16 strategy pairs, worst relative gap {worst:.2e}; matrix game value 3: {matrix_ok}"
        ),
    )
}

fn criterion_12() -> Outcome {
    let configs = [
        r#"{"study": "calculus-check", "instances": 5, "points": 200}"#,
        r#"{"study": "convergence", "n_list": [8, 16, 32], "paths": 256}"#,
        r#"{"study": "synth", "plan": {"cplan": 1048576, "l2_samples": 200}}"#,
        r#"{"study": "game", "points": 20}"#,
        r#"{"study": "scaling", "dims": [2, 4], "eps_list": [0.4, 0.2], "plan": {"cplan": 1048576, "l2_samples": 200}}"#,
    ];
    let root = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for text in configs {
        let config = stiffnet_cli::parse_config(text).unwrap();
        let one = root.path().join(format!("{}-1", config.name()));
        let four = root.path().join(format!("{}-4", config.name()));
        for (dir, threads) in [(&one, 1), (&four, 4)] {
            if let Err(e) = stiffnet_cli::run(&config, dir, Some(threads)) {
                failures.push(format!("{} threads={threads}: {e}", config.name()));
            }
        }
        if let Some(diff) = first_difference(&one, &four) {
            failures.push(format!("{}: {diff}", config.name()));
        }
        if let Err(e) = stiffnet_cli::verify(&one, None, Some(4)) {
            failures.push(format!("{} verify: {e}", config.name()));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "5 studies: deterministic CSV bytes equal under 1 and 4 threads; verify passes".into()
        } else {
            failures.join("; ")
        },
    )
}

/// First artifact whose deterministic columns differ between two runs.
fn first_difference(a: &Path, b: &Path) -> Option<String> {
    use stiffnet_cli::artifact::{read_table, Manifest};
    let manifest = match Manifest::read(a) {
        Ok(m) => m,
        Err(e) => return Some(e.to_string()),
    };
    manifest.artifacts.iter().find_map(|name| {
        match (read_table(&a.join(name)), read_table(&b.join(name))) {
            (Ok(x), Ok(y))
                if x.deterministic().to_csv().as_bytes()
                    == y.deterministic().to_csv().as_bytes() =>
            {
                None
            }
            (Ok(_), Ok(_)) => Some(format!("{name} differs")),
            (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        }
    })
}

fn main() {
    // cargo passes harness flags such as `--nocapture`; a filter that names
    // nothing here skips the suite.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let opts = SynthOptions {
        l2_samples: 1000,
        ..SynthOptions::default()
    };
    let mut unexpected = Vec::new();
    let mut report = |n: u32, name: &str, start: Instant, o: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_RED.contains(&n) {
            " [known red]"
        } else {
            ""
        };
        println!(
            "{tag} criterion {n:>2} {name}: {} ({secs:.1}s){note}",
            o.detail
        );
        if !o.pass && !KNOWN_RED.contains(&n) {
            unexpected.push(n);
        }
    };

    let t = Instant::now();
    let (c1, c2) = criteria_1_2();
    report(1, "calculus exactness", t, c1);
    report(2, "size bounds", t, c2);
    let t = Instant::now();
    report(3, "square network accuracy", t, criterion_3());
    let t = Instant::now();
    report(4, "implicit step contraction", t, criterion_4());
    let t = Instant::now();
    report(5, "strong rate", t, criterion_5());
    let t = Instant::now();
    report(6, "coefficient gap bound", t, criterion_6());
    let t = Instant::now();
    report(7, "moment bounds", t, criterion_7());
    let t = Instant::now();
    report(8, "unrolled network vs simulation", t, criterion_8());
    let t = Instant::now();
    let cplan = calibrated_cplan(&opts);
    report(9, "end-to-end accuracy", t, criterion_9(cplan, &opts));
    let t = Instant::now();
    report(10, "size scaling", t, criterion_10(cplan, &opts));
    let t = Instant::now();
    report(11, "game value network", t, criterion_11());
    let t = Instant::now();
    report(12, "reproducibility", t, criterion_12());

    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
