//! Seeded pseudo-random stream shared by every stochastic step.
//!
//! Algorithm, fixed for reproducibility:
//!
//! - core generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
//!   through `SeedableRng::seed_from_u64` (PCG32 expansion of the 64-bit seed);
//! - `uniform()`: top 53 bits of `next_u64()` scaled by 2⁻⁵³, range `[0, 1)`;
//! - `uniform_open()`: same bits offset by one half, range `(0, 1)`;
//! - `below(n)`: rejection sampling on `next_u64()` against the largest
//!   multiple of `n`, so every value is equally likely;
//! - `normal()`: Box–Muller, the second variate of each pair is cached;
//! - `shuffle()`: Fisher–Yates from the last element down using `below`;
//! - `derive_seed(parent, index)`: SplitMix64 finalizer of
//!   `parent ⊕ splitmix(index + φ)`, giving independent child streams.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(GOLDEN_GAMMA)))
}

#[derive(Clone, Debug)]
pub struct Prng {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent stream for child `index` of `seed`.
    pub fn child(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Prng::new(2024);
        let mut b = Prng::new(2024);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn different_seeds_diverge_quickly() {
        for seed in 0..50u64 {
            let mut a = Prng::new(seed);
            let mut b = Prng::new(seed + 1);
            let differ = (0..10).any(|_| a.next_u64() != b.next_u64());
            assert!(differ);
        }
    }

    #[test]
    fn chi_square_uniformity() {
        let mut rng = Prng::new(7);
        let mut bins = [0u32; 10];
        let n = 100_000;
        for _ in 0..n {
            bins[(rng.uniform() * 10.0) as usize] += 1;
        }
        let expected = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // χ²₉ critical value at α = 0.001
        assert!(chi2 < 27.877, "chi2 = {chi2}");
    }

    #[test]
    fn below_stays_in_range_and_shuffle_permutes() {
        let mut rng = Prng::new(3);
        assert!((0..1000).all(|_| rng.below(7) < 7));
        let mut p = rng.permutation(20);
        p.sort_unstable();
        assert_eq!(p, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn child_streams_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
