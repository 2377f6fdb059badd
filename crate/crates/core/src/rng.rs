//! Named random sub-streams derived from one run seed.
//!
//! Every consumer (parameter init, noise, negatives, shuffling) draws
//! from its own stream keyed by a name and a counter path, so pinning one
//! stream never perturbs another and runs are reproducible regardless of
//! the order in which parallel work completes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const NOISE: &str = "noise";
pub const NEGATIVES: &str = "negatives";
pub const SHUFFLE: &str = "shuffle";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for stream `name` at position `path` under `seed`.
pub fn derive_seed(seed: u64, name: &str, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ fnv1a(name));
    for &p in path {
        h = splitmix(h ^ p);
    }
    h
}

pub fn stream(seed: u64, name: &str, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, name, path))
}
