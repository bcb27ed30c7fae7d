//! Seedable random streams. Every episode draws from its own ChaCha stream
//! keyed by `(run_seed, index)`, so a batch produces the same paths whatever
//! the thread count or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub run_seed: u64,
    pub index: u64,
}

impl StreamId {
    pub fn new(run_seed: u64, index: u64) -> Self {
        Self { run_seed, index }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.run_seed);
        rng.set_stream(self.index);
        rng
    }
}
