//! Seed expansion.
//!
//! A single master seed fans out into labelled, indexed substreams. Each
//! consumer asks for `substream(master, "label", index)`; adding a new label
//! never perturbs the numbers drawn under existing labels, and run `i` of an
//! ensemble always sees the same stream regardless of how runs are scheduled
//! across threads.
//!
//! The mixing function is SplitMix64 applied twice:
//!
//! ```text
//! seed = splitmix64(splitmix64(master ^ fnv1a64(label)) ^ index)
//! ```
//!
//! and the resulting 64-bit value seeds a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea & Flood).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn substream_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a64(label)) ^ index)
}

pub fn substream(master: u64, label: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(substream_seed(master, label, index))
}
