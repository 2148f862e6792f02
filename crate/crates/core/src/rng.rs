//! Seeded per-trajectory random streams.
//!
//! Trajectory `i` of a run with seed `s` always draws from ChaCha8 seeded
//! with `s` on stream `i`, so results do not depend on scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math::ln;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform on `[0, 1)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform on `(0, 1]`.
pub fn uniform_pos<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * SCALE
}

/// Exponential with the given rate.
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -ln(uniform_pos(rng)) / rate
}
