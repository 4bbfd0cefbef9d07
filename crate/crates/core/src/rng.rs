//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by the
//! user seed and selected by a stream id, so independent pieces of work
//! (series, weather, restarts) never share state and scheduling order has no
//! effect on results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit mix used to derive stream ids from structured labels.
pub fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over the combined words.
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
