//! Sawtooth approximation of `x²` and the truncated weighted square cost.
//!
//! With the tooth `g(x) = 2ϱ(x) − 4ϱ(x−½) + 2ϱ(x−1)` and `g_s` its s-fold
//! composition, `f_S(x) = x − Σ_{s≤S} g_s(x)/4^s` is the piecewise linear
//! interpolant of `x²` on the nodes `k·2^{−S}`. Since `g` vanishes outside
//! `[0,1]`, `f_S(x) = x` there.

use crate::error::{param, Result};
use crate::nn::{fold_affine, Layer, Matrix, Network, Side};

/// Calibrated constant for `C(net) ≤ C·d²·ln(1/ε) + d + 1`.
///
/// The construction has size `d²(36S−30) + d(6S+7) + 1` for `S ≥ 2` and
/// `12d² + 12d + 1` for `S = 1`; with `S ≤ ½log₂(1/ε)` and `ε < ½` the
/// worst case is `S = 1`, `d = 1`, `ε → ½`, which needs `24/ln 2 < 35`.
pub const WEIGHTED_SQUARE_CONST: f64 = 35.0;

/// Number of sawtooth terms `S = ⌈½ log₂(1/ε)⌉ − 1`, at least 1.
pub fn sawtooth_terms(eps: f64) -> u32 {
    let s = (0.5 * (1.0 / eps).log2()).ceil() as i64 - 1;
    s.max(1) as u32
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(param(format!("accuracy must lie in (0, 1/2), got {eps}")))
    }
}

/// Layers of `f_S` on a scalar input; hidden units are `(tooth×3, acc, ϱ(x), ϱ(−x))`.
///
/// Tooth terms come first in every row so that they cancel to an exact zero
/// outside `[0,1]` before `ϱ(x) − ϱ(−x)` is added.
fn sawtooth_layers(s: u32) -> Vec<Layer> {
    let mut layers = Vec::new();
    layers.push(
        Layer::dense(
            &[vec![1.0], vec![1.0], vec![1.0], vec![1.0], vec![-1.0]],
            vec![0.0, -0.5, -1.0, 0.0, 0.0],
        )
        .unwrap(),
    );
    let tooth = [2.0, -4.0, 2.0];
    for k in 1..s {
        let scale = 0.25f64.powi(k as i32);
        // previous units: [t1, t2, t3, (acc), a, b]
        let has_acc = k > 1;
        let width = if has_acc { 6 } else { 5 };
        let a0 = width - 2;
        let mut rows = vec![vec![0.0; width]; 6];
        for (j, &c) in tooth.iter().enumerate() {
            for row in rows.iter_mut().take(3) {
                row[j] = c;
            }
            rows[3][j] = c * scale;
        }
        if has_acc {
            rows[3][3] = 1.0;
        }
        rows[4][a0] = 1.0;
        rows[5][a0 + 1] = 1.0;
        layers.push(Layer::dense(&rows, vec![0.0, -0.5, -1.0, 0.0, 0.0, 0.0]).unwrap());
    }
    let scale = 0.25f64.powi(s as i32);
    let mut out = vec![-2.0 * scale, 4.0 * scale, -2.0 * scale];
    if s > 1 {
        out.push(-1.0);
    }
    out.extend([1.0, -1.0]);
    layers.push(Layer::dense(&[out], vec![0.0]).unwrap());
    layers
}

/// Network approximating `x²` on `[0,1]` within `ε`, equal to `x` elsewhere.
pub fn square_unit_net(eps: f64) -> Result<Network> {
    check_eps(eps)?;
    Network::new(sawtooth_layers(sawtooth_terms(eps)))
}

/// The truncated cost `f_{d,D}(x) = Σ β_m f_{1,D}(x_m)`, with
/// `f_{1,D}(x) = x²` for `|x| ≤ D` and `D|x|` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSquare {
    pub beta: Vec<f64>,
    pub radius: f64,
}

impl TruncatedSquare {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = self.radius;
        self.beta
            .iter()
            .zip(x)
            .map(|(b, &v)| b * if v.abs() <= r { v * v } else { r * v.abs() })
            .sum()
    }

    /// The untruncated quadratic `Σ β_m x_m²`.
    pub fn full(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v * v).sum()
    }

    pub fn beta_sup(&self) -> f64 {
        self.beta.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Uniform bound `‖β‖_∞ d D² ε` on the network error.
    pub fn network_error_bound(&self, eps: f64) -> f64 {
        self.beta_sup() * self.beta.len() as f64 * self.radius * self.radius * eps
    }

    pub fn lipschitz_bound(&self) -> f64 {
        2.0 * self.beta_sup() * (self.beta.len() as f64).sqrt() * self.radius
    }
}

/// Scalar block `x ↦ D² f_S(|x|/D)`.
fn truncated_unit(radius: f64, s: u32) -> Network {
    let mut layers = vec![Layer::dense(&[vec![1.0], vec![-1.0]], vec![0.0, 0.0]).unwrap()];
    let mut saw = sawtooth_layers(s);
    let (w1, b1) = saw.remove(0).into_parts();
    let abs = Matrix::from_rows(&[vec![1.0 / radius, 1.0 / radius]]);
    layers.push(Layer::new(w1.matmul(&abs), b1).unwrap());
    layers.extend(saw);
    let net = Network::new(layers).unwrap();
    let r2 = radius * radius;
    fold_affine(&net, Side::Post, &Matrix::diagonal(&[r2]), &[0.0]).unwrap()
}

/// Network for the weighted truncated square, accurate to `‖β‖_∞ d D² ε`.
pub fn weighted_square_net(
    beta: &[f64],
    radius: f64,
    eps: f64,
) -> Result<(TruncatedSquare, Network)> {
    check_eps(eps)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(param(format!(
            "truncation radius must be positive, got {radius}"
        )));
    }
    if beta.is_empty() || beta.iter().any(|b| !b.is_finite()) {
        return Err(param("weights must be a nonempty finite vector"));
    }
    let d = beta.len();
    let unit = truncated_unit(radius, sawtooth_terms(eps));
    let mut layers = Vec::with_capacity(unit.depth());
    for layer in unit.layers() {
        let blocks: Vec<&Matrix> = (0..d).map(|_| layer.weight()).collect();
        let bias = (0..d).flat_map(|_| layer.bias().iter().copied()).collect();
        layers.push(Layer::new(Matrix::block_diag(&blocks), bias)?);
    }
    let net = Network::new(layers)?;
    let net = fold_affine(
        &net,
        Side::Post,
        &Matrix::from_rows(&[beta.to_vec()]),
        &[0.0],
    )?;
    let bound = WEIGHTED_SQUARE_CONST * (d * d) as f64 * (1.0 / eps).ln() + d as f64 + 1.0;
    assert!(
        net.size() as f64 <= bound.floor(),
        "weighted square size bound"
    );
    Ok((
        TruncatedSquare {
            beta: beta.to_vec(),
            radius,
        },
        net,
    ))
}
