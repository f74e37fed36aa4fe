//! Labeled seed derivation and counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! key is derived from the master seed, a component label and a list of
//! indices (path number, start site, ...). Streams are therefore a pure
//! function of their coordinates and never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from `(master, label, indices)`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = mix64(master ^ fnv1a64(label.as_bytes()));
    for &i in indices {
        h = mix64(h ^ mix64(i));
    }
    h
}

/// Signed coordinates (sites) are folded into the index space bijectively.
pub fn site_index(x: i64) -> u64 {
    x as u64
}

pub fn stream_from_seed(seed: u64) -> Stream {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = mix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn stream(master: u64, label: &str, indices: &[u64]) -> Stream {
    stream_from_seed(derive_seed(master, label, indices))
}
