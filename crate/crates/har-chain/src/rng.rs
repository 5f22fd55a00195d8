//! Deterministic random-stream derivation.
//!
//! All randomness in the crate flows from one master seed. Independent
//! sub-streams are derived by folding tag words into the seed with a
//! SplitMix64-style mixer, so that e.g. toggling augmentation cannot perturb
//! the shuffle order. Streams are ChaCha8, which is portable and bit-stable
//! across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Stream tags. Each consumer owns one tag so streams never collide.
pub const MODEL_INIT: u64 = 1;
pub const SHUFFLE: u64 = 2;
pub const AUGMENT: u64 = 3;
pub const SYNTH_BOUTS: u64 = 4;
pub const SYNTH_NOISE: u64 = 5;
pub const SPLIT: u64 = 6;
pub const TRIAL: u64 = 7;
pub const FOLD_MODEL: u64 = 8;
pub const FOLD_TRAIN: u64 = 9;
pub const GRADCHECK: u64 = 10;

/// Fold one tag word into a seed (SplitMix64 finalizer).
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the sub-stream identified by `path` from a master seed.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut s = master;
    for &tag in path {
        s = mix(s, tag);
    }
    let mut key = [0u8; 32];
    let mut word = s;
    for chunk in key.chunks_exact_mut(8) {
        word = mix(word, 0x5BF0_3DF5_34BB_71F9);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
