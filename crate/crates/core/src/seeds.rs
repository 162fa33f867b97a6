//! Stable seed derivation.
//!
//! Sub-seeds are produced by folding each component through the SplitMix64
//! finalizer, so they are identical across platforms and releases.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words.
pub fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Packs up to eight ASCII bytes into a word, for readable stage tags.
pub const fn tag(name: &str) -> u64 {
    let b = name.as_bytes();
    let mut out = 0u64;
    let mut i = 0;
    while i < b.len() && i < 8 {
        out |= (b[i] as u64) << (8 * i);
        i += 1;
    }
    out
}
