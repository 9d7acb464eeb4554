//! Counter-based random streams.
//!
//! Every probe, path or trial draws from its own ChaCha stream selected by
//! `(seed, stream)`, so results never depend on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// RNG for the given stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on `[lo, hi]`.
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> T {
    let u: f64 = rng.random();
    T::lit(lo + (hi - lo) * u)
}

/// Vector of `len` uniform draws on `[-bound, bound]`.
pub fn uniform_box<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize, bound: f64) -> Vec<T> {
    (0..len).map(|_| uniform(rng, -bound, bound)).collect()
}
