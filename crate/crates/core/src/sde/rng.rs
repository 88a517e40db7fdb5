//! Counter-addressed Brownian increments.
//!
//! The normals for path `m`, step `n` come from a ChaCha8 stream keyed by the
//! seed, with stream id `m` and a word offset derived from `n`. Any increment
//! can be regenerated in isolation, so path sets do not depend on the order
//! in which paths are simulated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const WORDS_PER_STEP_LOG2: u32 = 20;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    let mut s = seed;
    for chunk in k.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    k
}

/// Brownian increments for `paths` independent `d`-dimensional motions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathBundle {
    pub seed: u64,
    pub paths: usize,
    pub d: usize,
    key: [u8; 32],
}

impl PathBundle {
    pub fn new(seed: u64, paths: usize, d: usize) -> Self {
        assert!(
            d < (1 << (WORDS_PER_STEP_LOG2 - 3)),
            "dimension too large for the step stride"
        );
        PathBundle {
            seed,
            paths,
            d,
            key: key(seed),
        }
    }

    /// Standard normals `z(seed, m, n)` of length `d`.
    pub fn normals(&self, m: usize, n: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(m as u64);
        rng.set_word_pos((n as u128) << WORDS_PER_STEP_LOG2);
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
    }

    /// `ΔB^m_{n+1}` on a grid of step `h`.
    pub fn increment(&self, m: usize, n: usize, h: f64, out: &mut [f64]) {
        self.normals(m, n, out);
        let s = h.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }

    /// Increment over coarse step `n` made of `refine` fine steps of size `h_fine`.
    pub fn coarse_increment(
        &self,
        m: usize,
        n: usize,
        refine: usize,
        h_fine: f64,
        out: &mut [f64],
    ) {
        let mut buf = vec![0.0; self.d];
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..refine {
            self.increment(m, n * refine + k, h_fine, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
    }

    /// All `n_steps` increments of path `m`, row after row.
    pub fn path(&self, m: usize, n_steps: usize, h: f64) -> Vec<f64> {
        let mut out = vec![0.0; n_steps * self.d];
        for (n, row) in out.chunks_mut(self.d.max(1)).enumerate().take(n_steps) {
            self.increment(m, n, h, row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_are_addressable() {
        let p = PathBundle::new(7, 4, 3);
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        p.increment(2, 5, 0.1, &mut a);
        p.increment(2, 5, 0.1, &mut b);
        assert_eq!(a, b);
        p.increment(3, 5, 0.1, &mut b);
        assert_ne!(a, b);
        p.increment(2, 6, 0.1, &mut b);
        assert_ne!(a, b);
        let other = PathBundle::new(8, 4, 3);
        other.increment(2, 5, 0.1, &mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn moments_are_standard() {
        let p = PathBundle::new(1, 2000, 2);
        let mut z = vec![0.0; 2];
        let (mut s1, mut s2, mut cross, mut n) = (0.0, 0.0, 0.0, 0.0);
        for m in 0..2000 {
            for k in 0..5 {
                p.normals(m, k, &mut z);
                s1 += z[0] + z[1];
                s2 += z[0] * z[0] + z[1] * z[1];
                cross += z[0] * z[1];
                n += 2.0;
            }
        }
        assert!((s1 / n).abs() < 0.03);
        assert!((s2 / n - 1.0).abs() < 0.05);
        assert!((cross / (n / 2.0)).abs() < 0.05);
    }

    #[test]
    fn coarse_is_sum_of_fine() {
        let p = PathBundle::new(3, 1, 2);
        let mut c = vec![0.0; 2];
        p.coarse_increment(0, 1, 4, 0.25, &mut c);
        let fine = p.path(0, 8, 0.25);
        for j in 0..2 {
            let s: f64 = (4..8).map(|k| fine[k * 2 + j]).sum();
            assert!((s - c[j]).abs() < 1e-15);
        }
    }
}
