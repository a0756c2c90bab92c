//! Seed splitting for per-trajectory and per-run random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `root`: `mix64(mix64(root) ^ index)`.
///
/// The root is mixed before the XOR; otherwise roots that differ only in
/// their low bits would hand out the same set of streams in a different order.
pub fn split(root: u64, index: u64) -> u64 {
    mix64(mix64(root) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
