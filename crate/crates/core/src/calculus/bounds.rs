//! Size bounds of the calculus operations, in exact integer arithmetic.

use crate::nn::size_from_dims;

pub fn identity_size(d: usize, depth: usize) -> u128 {
    let d = d as u128;
    match depth {
        1 => d * d + d,
        _ => 2 * d * (d + 1) + (depth as u128 - 2) * 2 * d * (2 * d + 1) + d * (2 * d + 1),
    }
}

/// `C(φ₁ ∘ φ₂) ≤ 2(C₁ + C₂)`.
pub fn compose(c1: u128, c2: u128) -> u128 {
    2 * (c1 + c2)
}

/// `C(Σ β_m φ_m) ≤ M² C(φ₁)`.
pub fn combine(m: usize, c: u128) -> u128 {
    (m as u128).pow(2) * c
}

pub fn parallel(ca: u128, cb: u128) -> u128 {
    2 * (ca + cb)
}

/// `C(base) + k²(sup_m C(φ_m) + C(Id_{d,2}))³` for `k` branches.
pub fn add_compose(base: u128, k: usize, sup_branch: u128, d: usize) -> u128 {
    base + (k as u128).pow(2) * (sup_branch + identity_size(d, 2)).pow(3)
}

/// `8ⁿ(C + 34/7) − 34/7`, which is an integer for every `n`.
pub fn max_tree(n: u32, c: u128) -> u128 {
    let p = 8u128.pow(n);
    p * c + 34 * (p - 1) / 7
}

/// Bound of the Monte Carlo average network over `m` unrolled paths.
pub fn unrolled_value(m: usize, cost: u128, sigma_cols: u128, d: usize, steps: usize) -> u128 {
    let inner = (d as u128 * sigma_cols + identity_size(d, 2)).pow(3);
    (m as u128).pow(2) * 2 * (cost + identity_size(d, 1) + 4 * inner * (steps as u128 + 1))
}

/// Size of the combination of `m` copies of an architecture.
pub fn combined_size(dims: &[usize], m: usize) -> u128 {
    size_from_dims(&super::combined_dims(dims, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::identity_net;

    #[test]
    fn identity_size_matches_construction() {
        for d in 1..6 {
            for l in 1..6 {
                assert_eq!(identity_size(d, l), identity_net(d, l).size());
            }
        }
        assert_eq!(identity_size(3, 2), 45);
    }

    #[test]
    fn max_tree_recursion() {
        assert_eq!(max_tree(0, 5), 5);
        for c in [1u128, 17, 1000] {
            for n in 1..6 {
                assert_eq!(max_tree(n, c), 34 + 8 * max_tree(n - 1, c));
            }
        }
    }
}
