//! Counter-based seed derivation.
//!
//! Every random quantity in the crate is drawn from a [`StreamRng`] obtained
//! by hashing a 64-bit master seed together with a path of integer labels
//! (trial index, round, user, component, ...). Two streams with different
//! paths are statistically independent, and a stream's content depends only
//! on its path, never on the order in which streams are created or on which
//! thread consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Labels that separate the different consumers of one master seed.
pub mod tag {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const GEOMETRY: u64 = 0x6765_6f6d_0000_0002;
    pub const OVERLAY: u64 = 0x6f76_6572_6c00_0003;
    pub const POINT: u64 = 0x706f_696e_7400_0004;
    pub const USER: u64 = 0x7573_6572_0000_0005;
    pub const AGGREGATE: u64 = 0x6167_6772_0000_0006;
    pub const DATA: u64 = 0x6461_7461_0000_0007;
    pub const INIT: u64 = 0x696e_6974_0000_0008;
    pub const PROBE: u64 = 0x7072_6f62_0000_0009;
    pub const TRUTH: u64 = 0x7472_7574_6800_000a;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    /// Derives a child seed from a label path.
    pub fn derive(self, path: &[u64]) -> u64 {
        let mut state = splitmix64(self.0);
        for &label in path {
            state = splitmix64(state ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019)));
        }
        state
    }

    /// Child master seed, for handing a sub-experiment its own seed space.
    pub fn child(self, path: &[u64]) -> MasterSeed {
        MasterSeed(self.derive(path))
    }

    /// Opens the generator for a label path.
    pub fn stream(self, path: &[u64]) -> StreamRng {
        let mut state = self.derive(path);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        StreamRng::from_seed(key)
    }
}

impl From<u64> for MasterSeed {
    fn from(seed: u64) -> Self {
        MasterSeed(seed)
    }
}
