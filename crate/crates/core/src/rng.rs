//! Deterministic seed derivation. Every random draw in the crate goes through a
//! `ChaCha8Rng` seeded from a root seed and a component tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Randomness consumers that receive independent streams from one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Fields,
    Permutation,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 0x6461_7461,
            Stream::Init => 0x696e_6974,
            Stream::Fields => 0x6669_656c,
            Stream::Permutation => 0x7065_726d,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for `stream` derived from `root`.
pub fn derive_seed(root: u64, stream: Stream) -> u64 {
    splitmix64(root ^ splitmix64(stream.tag()))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
