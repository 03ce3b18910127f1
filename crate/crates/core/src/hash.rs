//! The single 64-bit hash used everywhere randomness-free determinism is
//! required: embedding buckets, n-gram fingerprints, subsampling decisions,
//! payload checksums, and cache addressing.
//!
//! Definition: FNV-1a over the input bytes (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`), followed by a 64-bit
//! avalanche finalizer (the MurmurHash3 `fmix64` constants). Byte-oriented,
//! so the value is independent of platform endianness and stable across
//! releases.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hash a byte slice.
pub fn hash64(bytes: &[u8]) -> u64 {
    fmix64(fnv1a(FNV_OFFSET, bytes))
}

/// Hash several slices as if they were concatenated.
pub fn hash64_parts(parts: &[&[u8]]) -> u64 {
    let mut state = FNV_OFFSET;
    for part in parts {
        state = fnv1a(state, part);
    }
    fmix64(state)
}

/// Streaming form of [`hash64`] for payloads that are not contiguous in
/// memory (file checksums).
#[derive(Debug, Clone)]
pub struct Hasher64 {
    state: u64,
}

impl Hasher64 {
    pub fn new() -> Self {
        Self { state: FNV_OFFSET }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.state = fnv1a(self.state, bytes);
    }

    pub fn finish(&self) -> u64 {
        fmix64(self.state)
    }
}

impl Default for Hasher64 {
    fn default() -> Self {
        Self::new()
    }
}

fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen vectors, independently computed from the definition above.
    #[test]
    fn known_vectors() {
        assert_eq!(hash64(b""), 0xefd0_1f60_ba99_2926);
        assert_eq!(hash64(b"a"), 0x82a2_a958_a9be_ce5b);
        assert_eq!(hash64(b"hello"), 0xe9c5_62c0_fdb2_3244);
        assert_eq!(hash64(b"alpha"), 0xf7cb_6dc3_c90b_a7a5);
        assert_eq!(hash64(b"beta"), 0x20bd_57f7_24dc_18b2);
        assert_eq!(hash64(b"hello world"), 0x7c6d_8c01_9b6e_e5d5);
    }

    #[test]
    fn parts_match_concatenation() {
        let whole = hash64(b"hello world");
        assert_eq!(hash64_parts(&[b"hello", b" ", b"world"]), whole);
        assert_eq!(hash64_parts(&[b"hello world"]), whole);
        assert_eq!(hash64_parts(&[b"", b"hello world", b""]), whole);
    }

    #[test]
    fn streaming_matches_oneshot() {
        let mut h = Hasher64::new();
        h.update(b"hel");
        h.update(b"lo");
        assert_eq!(h.finish(), hash64(b"hello"));
        assert_eq!(Hasher64::new().finish(), hash64(b""));
    }
}
