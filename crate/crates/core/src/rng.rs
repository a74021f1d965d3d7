//! Seed derivation for independent random streams.
//!
//! Every stream in a run is derived from the run seed and a stable key, so
//! results do not depend on creation order or on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stream in the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Seed for the stream named `key` under `seed`.
pub fn named_seed(seed: u64, key: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(key.as_bytes())))
}

/// Seed for the `index`-th stream under `seed` (shots, replications).
pub fn indexed_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn named_stream(seed: u64, key: &str) -> StreamRng {
    StreamRng::seed_from_u64(named_seed(seed, key))
}

pub fn indexed_stream(seed: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(indexed_seed(seed, index))
}
