//! Counter-based seed derivation, so an instance depends only on its
//! coordinates in the ensemble and never on scheduling.

/// One round of the SplitMix64 output function.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of realization `r` at size `n` for a given base seed.
pub fn derive_seed(base_seed: u64, n: usize, realization: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ n as u64) ^ realization)
}
