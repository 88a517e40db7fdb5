//! Randomized exactness and size-bound checks over the calculus operations.

use super::{
    add_compose, add_compose_width_condition, bounds, combine, compose, extend_depth, identity_net,
    max_tree, min_tree, parallel_shared, widen_layer,
};
use crate::error::Result;
use crate::nn::{fold_affine, Layer, Matrix, Network, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one operation over all its instances.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub operation: &'static str,
    pub instances: usize,
    pub points: usize,
    /// Largest `|got − want| / (1 + |want|)` seen.
    pub max_rel_err: f64,
    pub bound_violations: usize,
}

impl CheckRow {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err <= tol && self.bound_violations == 0
    }
}

pub const OPERATIONS: [&str; 10] = [
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

/// Network with the given dims and weights uniform in `±1/√fan_in`.
pub fn random_network(dims: &[usize], rng: &mut impl Rng) -> Network {
    let layers = dims
        .windows(2)
        .map(|w| {
            let s = 1.0 / (w[0] as f64).sqrt();
            let data: Vec<f64> = (0..w[0] * w[1]).map(|_| rng.gen_range(-s..=s)).collect();
            let bias = (0..w[1]).map(|_| rng.gen_range(-0.5..=0.5)).collect();
            Layer::new(Matrix::from_row_major(w[1], w[0], &data), bias).expect("consistent shapes")
        })
        .collect();
    Network::new(layers).expect("consistent layers")
}

fn random_dims(rng: &mut impl Rng, n_in: usize, n_out: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![n_in];
    dims.extend((1..depth).map(|_| rng.gen_range(1..=6)));
    dims.push(n_out);
    dims
}

fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect()
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / (1.0 + w.abs()))
        .fold(0.0, f64::max)
}

type VecFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

struct Instance {
    net: Network,
    want: VecFn,
    bound: Option<u128>,
}

fn instance(op: &str, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let d = rng.gen_range(1..=4);
    let depth = rng.gen_range(1..=4);
    Ok(match op {
        "compose" => {
            let mid = rng.gen_range(1..=4);
            let inner = random_network(&random_dims(rng, d, mid, depth), rng);
            let outer_depth = rng.gen_range(1..=4);
            let outer = random_network(&random_dims(rng, mid, 2, outer_depth), rng);
            let net = compose(&outer, &inner)?;
            let bound = Some(bounds::compose(outer.size(), inner.size()));
            Instance {
                net,
                want: Box::new(move |x| outer.eval(&inner.eval(x))),
                bound,
            }
        }
        "combine" => {
            let m = rng.gen_range(1..=5);
            let dims = random_dims(rng, d, 2, depth);
            let nets: Vec<Network> = (0..m).map(|_| random_network(&dims, rng)).collect();
            let coeffs: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            let net = combine(&coeffs, &nets)?;
            let bound = Some(bounds::combine(m, nets[0].size()));
            let want = move |x: &[f64]| {
                let mut out = vec![0.0; 2];
                for (c, n) in coeffs.iter().zip(&nets) {
                    for (o, v) in out.iter_mut().zip(n.eval(x)) {
                        *o += c * v;
                    }
                }
                out
            };
            Instance {
                net,
                want: Box::new(want),
                bound,
            }
        }
        "parallel_shared" => {
            let n_out = rng.gen_range(1..=3);
            let dims = random_dims(rng, d, n_out, depth);
            let a = random_network(&dims, rng);
            let b = random_network(&dims, rng);
            let net = parallel_shared(&a, &b)?;
            let bound = Some(bounds::parallel(a.size(), b.size()));
            Instance {
                net,
                want: Box::new(move |x| [a.eval(x), b.eval(x)].concat()),
                bound,
            }
        }
        "add_compose" => {
            let du = rng.gen_range(0..=2);
            let base = random_network(&random_dims(rng, d, d, depth), rng);
            let bdepth = rng.gen_range(2..=4);
            let bdims = random_dims(rng, d + du, d, bdepth);
            let k = rng.gen_range(1..=3);
            let branches: Vec<Network> = (0..k).map(|_| random_network(&bdims, rng)).collect();
            let u = random_point(rng, du);
            let net = add_compose(&base, &branches, &u)?;
            let bound = add_compose_width_condition(&base, &branches).then(|| {
                let sup = branches.iter().map(Network::size).max().unwrap_or(0);
                bounds::add_compose(base.size(), k, sup, d)
            });
            let want = move |x: &[f64]| {
                let y = base.eval(x);
                let z = [y.clone(), u.clone()].concat();
                let mut out = y;
                for b in &branches {
                    for (o, v) in out.iter_mut().zip(b.eval(&z)) {
                        *o += v;
                    }
                }
                out
            };
            Instance {
                net,
                want: Box::new(want),
                bound,
            }
        }
        "max_tree" | "min_tree" => {
            let n = rng.gen_range(0..=3u32);
            let dims = random_dims(rng, d, 1, depth);
            let nets: Vec<Network> = (0..1usize << n)
                .map(|_| random_network(&dims, rng))
                .collect();
            let is_max = op == "max_tree";
            let net = if is_max {
                max_tree(&nets)?
            } else {
                min_tree(&nets)?
            };
            let bound = Some(bounds::max_tree(n, nets[0].size()));
            let want = move |x: &[f64]| {
                let vals = nets.iter().map(|n| n.eval(x)[0]);
                vec![if is_max {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.fold(f64::INFINITY, f64::min)
                }]
            };
            Instance {
                net,
                want: Box::new(want),
                bound,
            }
        }
        "fold_affine" => {
            let base = random_network(&random_dims(rng, d, 2, depth), rng);
            if rng.gen_bool(0.5) {
                let k = rng.gen_range(1..=4);
                let m = random_network(&[k, d], rng).layers()[0].weight().clone();
                let c = random_point(rng, d);
                let net = fold_affine(&base, Side::Pre, &m, &c)?;
                let want = move |x: &[f64]| {
                    let y: Vec<f64> = m.mul_vec(x).iter().zip(&c).map(|(a, b)| a + b).collect();
                    base.eval(&y)
                };
                Instance {
                    net,
                    want: Box::new(want),
                    bound: None,
                }
            } else {
                let k = rng.gen_range(1..=4);
                let m = random_network(&[2, k], rng).layers()[0].weight().clone();
                let c = random_point(rng, k);
                let net = fold_affine(&base, Side::Post, &m, &c)?;
                let want = move |x: &[f64]| {
                    m.mul_vec(&base.eval(x))
                        .iter()
                        .zip(&c)
                        .map(|(a, b)| a + b)
                        .collect()
                };
                Instance {
                    net,
                    want: Box::new(want),
                    bound: None,
                }
            }
        }
        "identity" => {
            let net = identity_net(d, depth);
            let bound = Some(bounds::identity_size(d, depth));
            Instance {
                net,
                want: Box::new(|x| x.to_vec()),
                bound,
            }
        }
        "extend" => {
            let base = random_network(&random_dims(rng, d, 2, depth), rng);
            let net = extend_depth(&base, depth + rng.gen_range(1..=3))?;
            Instance {
                net,
                want: Box::new(move |x| base.eval(x)),
                bound: None,
            }
        }
        "widen" => {
            let base = random_network(&random_dims(rng, d, 2, depth.max(2)), rng);
            let l = rng.gen_range(1..base.depth());
            let net = widen_layer(&base, l)?;
            Instance {
                net,
                want: Box::new(move |x| base.eval(x)),
                bound: None,
            }
        }
        other => {
            return Err(crate::error::param(format!(
                "unknown calculus operation {other:?}"
            )))
        }
    })
}

/// Runs `instances` random constructions of `op`, each checked at `points`
/// random inputs in `[−2, 2]^n`.
pub fn check_operation(op: &str, instances: usize, points: usize, seed: u64) -> Result<CheckRow> {
    let salt = OPERATIONS
        .iter()
        .position(|o| *o == op)
        .unwrap_or(OPERATIONS.len()) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt << 32));
    let mut row = CheckRow {
        operation: OPERATIONS
            .iter()
            .copied()
            .find(|o| *o == op)
            .unwrap_or("unknown"),
        instances,
        points,
        max_rel_err: 0.0,
        bound_violations: 0,
    };
    for _ in 0..instances {
        let inst = instance(op, &mut rng)?;
        if inst.bound.is_some_and(|b| inst.net.size() > b) {
            row.bound_violations += 1;
        }
        for _ in 0..points {
            let x = random_point(&mut rng, inst.net.dim_in());
            row.max_rel_err = row
                .max_rel_err
                .max(rel_err(&inst.net.eval(&x), &(inst.want)(&x)));
        }
    }
    Ok(row)
}

pub fn exactness_suite(instances: usize, points: usize, seed: u64) -> Result<Vec<CheckRow>> {
    OPERATIONS
        .iter()
        .map(|op| check_operation(op, instances, points, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        for row in exactness_suite(5, 50, 1).unwrap() {
            assert!(row.passed(1e-12), "{row:?}");
        }
    }
}
