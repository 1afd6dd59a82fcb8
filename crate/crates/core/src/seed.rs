//! Child-seed derivation.
//!
//! Every random stream in a run is keyed by `(master seed, purpose tag,
//! indices)` so results never depend on thread scheduling order. The
//! derivation is: start from `splitmix64(master ^ fnv1a64(tag))`, then for
//! each index `i` apply `h = splitmix64(h ^ i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed, a purpose tag and indices.
pub fn derive(master: u64, tag: &str, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(master ^ fnv1a64(tag.as_bytes())), |h, &i| {
            splitmix64(h ^ i)
        })
}

/// Builds a seeded generator.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Shorthand for `rng(derive(master, tag, indices))`.
pub fn child_rng(master: u64, tag: &str, indices: &[u64]) -> Rng {
    rng(derive(master, tag, indices))
}
