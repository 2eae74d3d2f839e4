//! Counter-based random streams.
//!
//! Every (worker, epoch) pair owns an independent ChaCha8 stream, so the data a
//! worker sees for server iteration `t` does not depend on the order in which
//! asynchronous events were processed.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const EPOCH_BITS: u32 = 40;
const MAX_WORKER: usize = 1 << 22;

/// Stream ids at the top of the `u64` range are reserved for auxiliary draws
/// (dispatch order, participation) and never collide with sample streams.
pub mod aux {
    pub const UNIFORM_DISPATCH: u64 = u64::MAX;
    pub const SHUFFLED_DISPATCH: u64 = u64::MAX - 1;
    pub const PARTICIPATION: u64 = u64::MAX - 2;
    pub const PROBES: u64 = u64::MAX - 3;
    pub const MONTE_CARLO: u64 = u64::MAX - 4;
}

/// The data stream of worker `worker` for server iteration `epoch`.
pub fn sample_stream(seed: u64, worker: usize, epoch: u64) -> ChaCha8Rng {
    assert!(worker < MAX_WORKER, "worker id {worker} too large");
    assert!(epoch < (1u64 << EPOCH_BITS), "epoch {epoch} too large");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((worker as u64) << EPOCH_BITS) | epoch);
    rng
}

/// An auxiliary stream; see [`aux`].
pub fn aux_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Hands out sample streams and refuses to open the same one twice within a run.
#[derive(Debug, Clone)]
pub struct SampleStreams {
    seed: u64,
    used: HashSet<(usize, u64)>,
}

impl SampleStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            used: HashSet::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn open(&mut self, worker: usize, epoch: u64) -> Result<ChaCha8Rng> {
        if epoch == 0 {
            return Err(Error::invalid("sample epochs start at 1"));
        }
        if !self.used.insert((worker, epoch)) {
            return Err(Error::StreamReuse { worker, epoch });
        }
        Ok(sample_stream(self.seed, worker, epoch))
    }

    pub fn consumed(&self) -> usize {
        self.used.len()
    }
}
