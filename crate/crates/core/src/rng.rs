//! Seeded, stream-addressable random number generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

/// Words reserved for each substream; far more than any chunk consumes.
const SUBSTREAM_STRIDE: u128 = 1 << 40;

/// A `(seed, stream)` pair. Equal pairs reproduce identical draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    pub fn rng(&self) -> Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// Generator for the `index`-th disjoint block of this stream. Used to
    /// split work across threads without changing the result.
    pub fn substream(&self, index: u64) -> Rng {
        let mut r = self.rng();
        r.set_word_pos(index as u128 * SUBSTREAM_STRIDE);
        r
    }

    /// A different stream under the same seed.
    pub fn with_stream(&self, stream: u64) -> Self {
        RngSeed {
            seed: self.seed,
            stream,
        }
    }
}
