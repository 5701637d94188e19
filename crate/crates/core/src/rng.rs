//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from a [`ChaCha20Rng`] built
//! with `seed_from_u64`. Standard normal variates come from
//! [`rand_distr::StandardNormal`] (ziggurat). Both are pinned through the
//! crate's dependency versions, so a given seed yields the same stream on
//! every platform.
//!
//! Independent streams are obtained by hashing a master seed together with
//! one or more keys through the SplitMix64 finalizer (see [`derive_seed`]).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed = mix(mix(mix(master) ^ key) ^ index)`.
pub fn derive_seed(master: u64, key: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ key) ^ index)
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_differ_by_key_and_index() {
        let a = derive_seed(7, 1, 0);
        let b = derive_seed(7, 1, 1);
        let c = derive_seed(7, 2, 0);
        let d = derive_seed(8, 1, 0);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, derive_seed(7, 1, 0));
    }

    #[test]
    fn stream_is_reproducible() {
        let mut r1 = stream(42);
        let mut r2 = stream(42);
        for _ in 0..16 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
    }
}
