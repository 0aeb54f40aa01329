//! Seeded random source for the synthetic environment.
//!
//! The bit stream is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`
//! with `set_stream(stream)`), and every derived quantity below uses integer
//! operations, exact scaling and additions only, so draws are reproducible
//! bit for bit on any IEEE-754 platform and from any language with a
//! ChaCha8 implementation:
//!
//! * `uniform`  = `(next_u64 >> 11) * 2^-53`
//! * `below(n)` = `next_u64 % n`
//! * `normal`   = `mean + sd * (sum of 12 uniforms - 6)` (Irwin-Hall)

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Prng(ChaCha8Rng);

impl Prng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Prng(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        self.next_u64() % n
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.uniform();
        }
        mean + sd * (acc - 6.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let mut a = Prng::new(7, 3);
        let mut b = Prng::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = Prng::new(7, 4);
        assert_ne!(Prng::new(7, 3).next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = Prng::new(1, 0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_roughly_right() {
        let mut r = Prng::new(2, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| r.normal(3.0, 0.5)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 3.0).abs() < 0.02, "{mean}");
        assert!((var.sqrt() - 0.5).abs() < 0.02, "{var}");
    }

    #[test]
    fn golden_first_draws() {
        // frozen regression values for seed 1, stream 0
        let mut r = Prng::new(1, 0);
        assert_eq!(r.next_u64(), 7424550030962593201);
        assert_eq!(r.next_u64(), 1482817706323250795);
        assert_eq!(Prng::new(1, 0).normal(0.0, 1.0), -0.45133273739627633);
    }
}
