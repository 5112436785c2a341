//! Named sub-streams derived from one master seed.
//!
//! Every source of randomness in the pipeline (scenario sampling, SVM index
//! shuffling, fold splits, sweep schedules) draws its seed from
//! [`substream`], so changing how one component consumes randomness never
//! perturbs the others.

/// SplitMix64 finalizer; full-period bijection on `u64`.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the sub-stream `name` under `master`.
pub fn substream(master: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}
