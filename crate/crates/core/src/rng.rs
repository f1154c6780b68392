//! Named random streams derived from one master seed.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] obtained through
//! [`stream`]. The derivation is a counter-based split that any language can
//! reproduce:
//!
//! ```text
//! key  = splitmix64(master XOR fnv1a64(name))
//! base = splitmix64(key WRAPPING_ADD index * 0x9E37_79B9_7F4A_7C15)
//! seed = 32 bytes: splitmix64 sequence started at `base`, 4 words, little-endian
//! ```
//!
//! The resulting ChaCha8 stream is the standard 8-round ChaCha keystream.
//! Stream names in use are [`DATA`], [`INIT`], [`TRAIN`] and [`EVAL`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const DATA: &str = "data";
pub const INIT: &str = "init";
pub const TRAIN: &str = "train";
pub const EVAL: &str = "eval";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed words for `(master, name, index)`; exposed for manifests and tests.
pub fn stream_seed(master: u64, name: &str, index: u64) -> [u8; 32] {
    let key = splitmix64(master ^ fnv1a64(name));
    let mut state = splitmix64(key.wrapping_add(index.wrapping_mul(GOLDEN)));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    seed
}

pub fn stream(master: u64, name: &str, index: u64) -> Rng {
    Rng::from_seed(stream_seed(master, name, index))
}
