//! Named, index-addressable random substreams derived from one global seed.
//!
//! Every consumer of randomness asks for `substream(seed, tag, index)`, so a
//! bag's coalition draws never depend on how many draws another bag made or
//! on which worker thread scored it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let a = splitmix64(seed ^ stable_hash(tag.as_bytes()));
    splitmix64(a ^ splitmix64(index))
}

pub fn substream(seed: u64, tag: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Packs several small coordinates (round, epoch, bag index) into one index.
pub fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x2545_f491_4f6c_dd1d, |acc, &p| splitmix64(acc ^ p))
}
