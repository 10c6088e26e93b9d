//! Deterministic random draws shared by initialization, dropout and sampling.
//!
//! Everything here is seeded explicitly; the same seed always yields the same
//! stream, independent of platform or thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Seeded generator used across the crate.
pub fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derive a sub-stream seed from a base seed and a stream label.
/// Plain xor would collide for related labels, so mix with splitmix64.
pub fn derive_seed(base: u64, label: u64) -> u64 {
    let mut z = base ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One standard normal draw via Box-Muller.
/// Consumes exactly two uniforms per call, keeping streams reproducible.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform draw from the probability simplex (flat Dirichlet), via
/// normalized exponentials.
pub fn uniform_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}
