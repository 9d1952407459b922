//! Seeded randomness.
//!
//! All randomness comes from PCG32 (`rand_pcg::Pcg32`, XSH-RR output,
//! 64-bit state) seeded through `SeedableRng::seed_from_u64`. A unit
//! float is `(next_u64 >> 11) * 2^-53`, where `next_u64` is two
//! consecutive 32-bit outputs, low word first.

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg32;

pub fn seeded(seed: u64) -> Pcg32 {
    Pcg32::seed_from_u64(seed)
}

/// Uniform sample in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut Pcg32) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A PCG32 stream whose position can be persisted as `(seed, draws)`.
///
/// `draws` counts 32-bit outputs, so a resumed stream is rebuilt by
/// reseeding and advancing.
#[derive(Debug, Clone)]
pub struct TrackedRng {
    seed: u64,
    draws: u64,
    rng: Pcg32,
}

impl TrackedRng {
    pub fn new(seed: u64) -> Self {
        Self::resume(seed, 0)
    }

    pub fn resume(seed: u64, draws: u64) -> Self {
        let mut rng = seeded(seed);
        rng.advance(draws);
        Self { seed, draws, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 2;
        self.rng.next_u64()
    }

    pub fn unit_f64(&mut self) -> f64 {
        self.draws += 2;
        unit_f64(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resume_matches_uninterrupted_stream() {
        let mut a = TrackedRng::new(99);
        for _ in 0..7 {
            a.next_u64();
        }
        let mut b = TrackedRng::resume(99, a.draws());
        for _ in 0..5 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn unit_range() {
        let mut r = seeded(1);
        for _ in 0..1000 {
            let u = unit_f64(&mut r);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
