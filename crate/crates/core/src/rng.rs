//! Reproducible random streams.
//!
//! Every random quantity in the crate is a function of an [`RngStream`]
//! value. A stream is a `(seed, stream_id)` pair mapped onto a ChaCha12
//! keystream; ChaCha's 64-bit stream selector keeps distinct ids on
//! disjoint keystreams. Parallel work is split into indexed children, so
//! results depend on the child index and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl Default for RngStream {
    fn default() -> Self {
        RngStream {
            seed: 0,
            stream_id: 0,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Indexed sub-stream. Children of one parent are pairwise distinct
    /// and distinct from the parent for all practical purposes.
    pub fn child(&self, index: u64) -> RngStream {
        let mixed = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1)));
        RngStream {
            seed: self.seed,
            stream_id: mixed,
        }
    }

    /// Named sub-stream, used to give each stage of an experiment its own
    /// randomness (e.g. "frame", "samples", "control").
    pub fn fork(&self, label: &str) -> RngStream {
        // FNV-1a over the label bytes.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }
}
