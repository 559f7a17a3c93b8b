//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from explicit 64-bit master seeds.
//! Per-stream and per-replica generators are derived with a splitmix64-based
//! chain, so results are independent of sampling order and of how replicas
//! are distributed over worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a tag path.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(master ^ 0x6a09_e667_f3bc_c909);
    for &t in tags {
        acc = mix(acc ^ mix(t));
    }
    acc
}

/// Deterministic generator for a derived stream.
pub fn rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tags))
}

/// Tag value for a (possibly negative) site index.
pub fn site_tag(site: i64) -> u64 {
    site as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        assert_eq!(derive(7, &[1, 2]), derive(7, &[1, 2]));
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_ne!(derive(7, &[1]), derive(8, &[1]));
        assert_ne!(derive(7, &[site_tag(-3)]), derive(7, &[site_tag(3)]));
    }
}
