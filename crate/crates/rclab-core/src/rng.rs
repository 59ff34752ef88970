//! Counter-based random number generation.
//!
//! Conductance fields and replica seeds are derived by hashing
//! `(seed, counter)` pairs with the SplitMix64 finalizer, so every value is a
//! pure function of its key: sampling order does not matter and disjoint
//! index ranges can be filled from any number of threads with identical
//! results.

/// One round of the SplitMix64 output function.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a `(seed, counter)` pair.
#[inline]
pub fn keyed(seed: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(counter))
}

/// Uniform draw in `(0, 1]` from a `(seed, counter)` pair.
///
/// The half-open side is chosen so that powers `u^(1/gamma)` stay strictly
/// positive, matching conductances that are almost surely positive.
#[inline]
pub fn uniform_open_closed(seed: u64, counter: u64) -> f64 {
    // 53 mantissa bits; in [0,1), so 1 - u is in (0,1].
    let bits = keyed(seed, counter) >> 11;
    1.0 - (bits as f64) * (1.0 / 9_007_199_254_740_992.0)
}

/// Derives the seed for replica `index` of an experiment with `master` seed.
///
/// Domain-separated from bond sampling so an experiment never reuses the
/// stream of its own environment.
#[inline]
pub fn replica_seed(master: u64, index: u64) -> u64 {
    keyed(master ^ 0x5ca1_ab1e_0ddb_a11_u64, index)
}
