//! Seeding contract shared by every stochastic operation.
//!
//! All randomness flows through explicit [`SeedSpec`] values: an operation
//! given the same `(master_seed, stream_id)` and the same inputs produces
//! the same output, independent of thread count or call order. Streams are
//! backed by ChaCha's counter construction, so distinct stream ids give
//! statistically independent sequences and child streams can be derived
//! without consuming any random state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// A reproducible randomness source: a master seed plus a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    /// Root stream for a master seed.
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    /// Derive a child stream. Children with distinct `child` values are
    /// independent of each other and of the parent; the derivation is a
    /// pure function so sub-steps can be re-run in any order.
    pub fn stream(self, child: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(child)),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
