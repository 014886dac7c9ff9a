//! Seed plumbing. Every stochastic routine takes an [`RngSeed`] and builds a
//! ChaCha8 stream from it, so results are bit-reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent child seed from `(self, stream, index)`.
    ///
    /// Counter scheme: the three words are folded through SplitMix64 in
    /// order, `mix(mix(mix(base) ^ stream) ^ index)`. Streams are the
    /// constants in [`stream`]; indices are replicate or model positions.
    pub fn derive(self, stream: u64, index: u64) -> RngSeed {
        RngSeed(splitmix64(splitmix64(splitmix64(self.0) ^ stream) ^ index))
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const BALANCE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SELECT: u64 = 5;
    pub const RETRAIN: u64 = 6;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
