//! Closed-form moments of `dY = −AY dt + σ₀ dB`.

use nalgebra::{DMatrix, DVector};

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(1.0);
    (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= 1e-14 * scale))
}

/// `∫₀^T e^{−sA} σ₀σ₀ᵀ e^{−sAᵀ} ds`.
pub fn ou_covariance(a: &DMatrix<f64>, sigma0: &DMatrix<f64>, t_end: f64) -> DMatrix<f64> {
    let q = sigma0 * sigma0.transpose();
    if t_end == 0.0 {
        return DMatrix::zeros(q.nrows(), q.ncols());
    }
    if is_symmetric(a) {
        let eig = a.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let mut inner = v.transpose() * &q * v;
        for i in 0..inner.nrows() {
            for j in 0..inner.ncols() {
                let s = lam[i] + lam[j];
                // (1 − e^{−sT}) / s, with the s → 0 limit T
                let w = if (s * t_end).abs() < 1e-12 {
                    t_end
                } else {
                    -(-s * t_end).exp_m1() / s
                };
                inner[(i, j)] *= w;
            }
        }
        return v * inner * v.transpose();
    }
    // Composite Gauss-Legendre; each panel is short relative to ‖A‖.
    let panels = ((a.norm() * t_end * 4.0).ceil() as usize).clamp(64, 1 << 16);
    let width = t_end / panels as f64;
    let mut cov = DMatrix::zeros(q.nrows(), q.ncols());
    for k in 0..panels {
        let left = k as f64 * width;
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let s = left + (x + 1.0) * width / 2.0;
            let e = (-a * s).exp();
            cov += (&e * &q * e.transpose()) * (w * width / 2.0);
        }
    }
    cov
}

/// `E Σ_m β_m (Y_T)_m²` for `Y_0 = x₀`.
pub fn ou_exact_value(
    a: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    betaw: &[f64],
    x0: &[f64],
    t_end: f64,
) -> f64 {
    let mean = (-a * t_end).exp() * DVector::from_column_slice(x0);
    let cov = ou_covariance(a, sigma0, t_end);
    betaw
        .iter()
        .enumerate()
        .map(|(m, b)| b * (mean[m] * mean[m] + cov[(m, m)]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_case() {
        let d = 3;
        let v = ou_exact_value(
            &DMatrix::zeros(d, d),
            &DMatrix::identity(d, d),
            &[1.0; 3],
            &[1.0, 2.0, -1.0],
            0.7,
        );
        assert!((v - (6.0 + 3.0 * 0.7)).abs() < 1e-12);
    }

    #[test]
    fn scalar_ou() {
        let (a, d, t) = (2.5, 4, 0.8);
        let x0 = [0.3, -1.0, 0.5, 2.0];
        let v = ou_exact_value(
            &(DMatrix::identity(d, d) * a),
            &DMatrix::identity(d, d),
            &[1.0; 4],
            &x0,
            t,
        );
        let n2: f64 = x0.iter().map(|x| x * x).sum();
        let want = (-2.0 * a * t).exp() * n2 + d as f64 * (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
        assert!((v - want).abs() < 1e-12 * want);
    }

    #[test]
    fn zero_horizon() {
        let v = ou_exact_value(
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &[2.0, 3.0],
            &[1.0, -2.0],
            0.0,
        );
        assert_eq!(v, 14.0);
    }

    #[test]
    fn quadrature_matches_eigen_path() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -1.0, 2.0]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.7]);
        // Lyapunov residual: A P + P Aᵀ = Q − e^{−TA} Q e^{−TAᵀ}
        let t = 1.3;
        let p = ou_covariance(&a, &s, t);
        let q = &s * s.transpose();
        let e = (-&a * t).exp();
        let resid = &a * &p + &p * a.transpose() - (&q - &e * &q * e.transpose());
        assert!(resid.amax() < 1e-10, "{resid}");
    }
}
