//! Deterministic, hierarchical random-number streams.
//!
//! Every source of randomness in a run is drawn from a stream addressed by a
//! root seed and a path of `(tag, index)` coordinates, e.g.
//! `(STEP, m) -> (TREE, b) -> (NODE, v)`. The stream for a coordinate path is
//! a pure function of the seed and the path, so results are reproducible
//! regardless of thread count or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coordinate tags. Values are arbitrary but fixed: changing them changes
/// every stream in every run.
pub mod tag {
    pub const STEP: u64 = 1;
    pub const TREE: u64 = 2;
    pub const NODE: u64 = 3;
    pub const REPLICATION: u64 = 4;
    pub const LAMBDA: u64 = 5;
    pub const REFERENCE: u64 = 6;
    pub const DATA: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A point in the stream hierarchy. Cheap to copy; `child` derives
/// sub-streams and `rng` instantiates a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: splitmix64(seed ^ 0x6a09_e667_f3bc_c908),
        }
    }

    /// Derives the sub-stream at coordinate `(tag, index)`.
    pub fn child(&self, tag: u64, index: u64) -> Self {
        let mixed = splitmix64(self.key ^ splitmix64(tag.rotate_left(17) ^ index));
        RngStream { key: mixed }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut s = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
