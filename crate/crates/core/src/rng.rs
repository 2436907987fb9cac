//! Seed derivation for independent replications.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for replication `rep` of a run seeded with `seed`.
pub fn child_seed(seed: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ rep.wrapping_mul(GOLDEN))
}
