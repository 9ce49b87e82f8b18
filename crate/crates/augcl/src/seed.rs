//! Deterministic sub-seed derivation.
//!
//! Every random decision in a run is keyed off the master seed plus a tag path
//! (purpose, epoch, batch, ...). The mixing function is fixed so that runs are
//! reproducible across platforms and refactors.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `master` and a tag path.
///
/// Tags are folded in order, so `derive(s, &[1, 2])` and `derive(s, &[2, 1])`
/// land in different streams.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    state
}

/// Stable tag for a named stream.
pub fn tag(name: &str) -> u64 {
    // FNV-1a over the name bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in name.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
