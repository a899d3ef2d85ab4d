//! Seed derivation. Every random stream is a ChaCha8 generator seeded from
//! `splitmix64(master ^ splitmix64(tag))`, so streams never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SWITCHING: u64 = 0x5357_4954_4348;
pub const NOISE: u64 = 0x4e_4f49_5345;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replica `index` under master seed `master`.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}
