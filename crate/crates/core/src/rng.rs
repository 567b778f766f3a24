//! Deterministic randomness.
//!
//! Every random decision in a run is drawn from a substream derived from a
//! single master seed by hashing `(purpose, round, user)`. Substreams are
//! independent of each other and of the order in which they are requested,
//! so users can be simulated in parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// What a substream is used for. Part of the derivation key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Purpose {
    SelectionNoise = 1,
    SelectionProjection = 2,
    Projection = 3,
    Publishing = 4,
    OpeNoise = 5,
    OpeKey = 6,
    SeedDealing = 7,
    Synthetic = 8,
    Sampling = 9,
}

/// Root of the substream tree for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: Purpose, round: u64, user: u64) -> ChaCha12Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"nldp/substream/v1");
        hasher.update(self.master.to_le_bytes());
        hasher.update([purpose as u8]);
        hasher.update(round.to_le_bytes());
        hasher.update(user.to_le_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha12Rng::from_seed(digest)
    }
}

/// Per-user streams for one `(purpose, round)` pair.
#[derive(Debug, Clone, Copy)]
pub struct Substreams {
    tree: SeedTree,
    purpose: Purpose,
    round: u64,
}

impl Substreams {
    pub fn new(tree: SeedTree, purpose: Purpose, round: u64) -> Self {
        Self { tree, purpose, round }
    }

    pub fn for_user(&self, user: usize) -> ChaCha12Rng {
        self.tree.stream(self.purpose, self.round, user as u64)
    }
}
