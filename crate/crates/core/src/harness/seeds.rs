//! Per-trial random sources and the bounded worker pool.
//!
//! Every trial draws from its own ChaCha8 stream keyed by the master seed,
//! a cell label and the trial index, so results do not depend on which
//! worker ran the trial or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `master`, order-sensitively.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn trial_rng(master: u64, cell: &[u64], trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, cell));
    rng.set_stream(trial);
    rng
}

/// A fixed-size pool. With one worker, `map` runs on the calling thread.
pub struct Workers {
    pool: ThreadPool,
    count: usize,
}

impl Workers {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::arg("worker count must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool, count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `f(0), ..., f(len - 1)` in index order.
    pub fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.count == 1 {
            (0..len).map(f).collect()
        } else {
            self.pool.install(|| (0..len).into_par_iter().map(f).collect())
        }
    }

    /// Runs `f` inside the pool, so library-internal parallel loops use
    /// these workers.
    pub fn install<T: Send, F: FnOnce() -> T + Send>(&self, f: F) -> T {
        self.pool.install(f)
    }

    pub fn try_map<T, F>(&self, len: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }
}
