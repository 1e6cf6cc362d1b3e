//! Counter-based random streams.
//!
//! Every trial draws from its own ChaCha8 stream: the key is derived from the
//! master seed and an experiment id, and the 64-bit stream word is the trial
//! index. A trial's randomness therefore depends only on `(seed, experiment,
//! trial)`, never on which worker ran it or in what order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Identifies one stream: an experiment and a trial within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub experiment: u64,
    pub trial: u64,
}

/// Stable 64-bit id for a named experiment.
pub fn experiment_id(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Stream family for one experiment under one master seed.
#[derive(Debug, Clone)]
pub struct Streams {
    key: [u8; 32],
    experiment: u64,
}

impl Streams {
    pub fn new(master_seed: u64, experiment: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"wedge-dla/stream/v1");
        hasher.update(master_seed.to_le_bytes());
        hasher.update(experiment.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Streams { key, experiment }
    }

    pub fn named(master_seed: u64, name: &str) -> Self {
        Streams::new(master_seed, experiment_id(name))
    }

    pub fn experiment(&self) -> u64 {
        self.experiment
    }

    pub fn trial(&self, trial: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial);
        rng
    }

    pub fn id(&self, trial: u64) -> StreamId {
        StreamId { experiment: self.experiment, trial }
    }
}
