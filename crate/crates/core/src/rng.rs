//! Portable pseudo-random source.
//!
//! ChaCha8 seeded through `seed_from_u64`; every derived draw is built from
//! raw `next_u64` output with a fixed rule so that ports to other languages
//! can reproduce scenarios and rollouts bit for bit:
//!
//! * `uniform()` = `(next_u64 >> 11) * 2^-53`, in `[0, 1)`
//! * `index(n)` = `floor(uniform() * n)`
//! * `gaussian(mu, sd)` = Box-Muller on two fresh uniforms (cosine branch)

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct Rng64 {
    inner: ChaCha8Rng,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent stream for a sub-component (episode, worker, ...).
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mixed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Self::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Inclusive integer range.
    pub fn int_range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.index((hi - lo + 1) as usize) as i64
    }

    pub fn standard_normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn gaussian(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Fisher-Yates shuffle driven by `index`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
