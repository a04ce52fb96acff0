//! Seed derivation and minibatch sampling.
//!
//! Every random stream in a run is derived from the run seed:
//!
//! * stream [`INIT_STREAM`] initializes the parameters,
//! * stream [`worker_stream`]`(k)` drives worker `k`'s minibatches
//!   (workers are numbered from 1),
//! * centralized trainers draw minibatches from `worker_stream(1)`, so a
//!   single-worker federated run sees exactly the batches of the central run,
//! * [`PARTITION_STREAM`] shuffles the data before it is split across workers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT_STREAM: u64 = 0;
pub const PARTITION_STREAM: u64 = u64::MAX;
pub const SPLIT_STREAM: u64 = u64::MAX - 1;

pub fn worker_stream(k: usize) -> u64 {
    k as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit hash of `(run_seed, stream)`.
pub fn derive_seed(run_seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(run_seed) ^ stream.rotate_left(32) ^ 0xD1B5_4A32_D192_ED03)
}

pub fn rng_for(run_seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(run_seed, stream))
}

/// Sampling without replacement within an epoch; the order is reshuffled
/// whenever the next batch would run past the end of the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            epoch: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Indices of the next `m` samples (`m` is clamped to the population).
    pub fn next_batch(&mut self, m: usize) -> Vec<usize> {
        let m = m.min(self.order.len());
        if self.pos + m > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let batch = self.order[self.pos..self.pos + m].to_vec();
        self.pos += m;
        batch
    }
}
