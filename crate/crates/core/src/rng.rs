//! Seeds and the deterministic generator behind every random draw.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Seed for a ChaCha20 stream. The same seed always yields the same stream,
/// on every platform and thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    pub fn rng(self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }

    /// Child seed for an independent sub-stream, keyed by `tags`.
    ///
    /// Counter-based: the child depends only on the parent and the tags, so a
    /// replication can be re-run in isolation.
    pub fn derive(self, tags: &[u64]) -> RandomSeed {
        let mut state = splitmix64(self.0 ^ 0x5EED_5EED_5EED_5EED);
        for &t in tags {
            state = splitmix64(state ^ splitmix64(t.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        }
        RandomSeed(state)
    }
}

impl From<u64> for RandomSeed {
    fn from(v: u64) -> Self {
        RandomSeed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
