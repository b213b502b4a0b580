use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Epoch-wise mini-batch indices: each epoch is a seeded shuffle cut into
/// contiguous batches, the last of which may be short.
#[derive(Clone, Debug)]
pub struct MinibatchSampler {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl MinibatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("dataset for mini-batch sampling"));
        }
        if batch_size == 0 || batch_size > n {
            return Err(Error::Invalid(format!(
                "batch size {batch_size} must lie in 1..={n}"
            )));
        }
        Ok(Self {
            order: (0..n).collect(),
            batch_size,
            pos: n,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_indices(&mut self) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let start = self.pos;
        self.pos = (start + self.batch_size).min(self.order.len());
        &self.order[start..self.pos]
    }

    /// Batches of the next full epoch, starting a new one if the current one
    /// is partly consumed.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        self.pos = self.order.len();
        (0..self.batches_per_epoch()).map(|_| self.next_indices().to_vec()).collect()
    }
}
