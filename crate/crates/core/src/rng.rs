//! Seeded random streams.
//!
//! Every stochastic routine draws from ChaCha8 (a counter-based generator):
//! the 64-bit seed fixes the key and the replicate index selects the stream,
//! so replicate `r` of a run sees the same numbers no matter which worker
//! executes it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type KmacRng = ChaCha8Rng;

/// Generator for stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> KmacRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; used for cheap keyed hashing.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}
