use rand::seq::SliceRandom;

use super::ImageSet;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Shuffled full batches over one epoch; the partial tail is dropped.
#[derive(Clone, Debug)]
pub struct BatchIter<'a> {
    set: &'a ImageSet,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<'a> BatchIter<'a> {
    pub fn new(set: &'a ImageSet, batch_size: usize, rng: &mut Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > set.len() {
            return Err(Error::Dimension(format!(
                "batch size {batch_size} needs 1 ≤ M ≤ {} images",
                set.len()
            )));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(rng);
        Ok(BatchIter {
            set,
            order,
            batch_size,
            next: 0,
        })
    }

    pub fn batches(&self) -> usize {
        self.order.len() / self.batch_size
    }

    /// Indices of the next batch without materializing pixels.
    pub fn next_indices(&mut self) -> Option<&[usize]> {
        let start = self.next * self.batch_size;
        if self.next >= self.batches() {
            return None;
        }
        self.next += 1;
        Some(&self.order[start..start + self.batch_size])
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Tensor;

    fn next(&mut self) -> Option<Tensor> {
        let set = self.set;
        self.next_indices().map(|idx| set.gather(idx))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.batches() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

/// Batches of `[M × 784]` in an order fixed by `epoch_seed`.
pub fn batch_iter(set: &ImageSet, batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'_>> {
    BatchIter::new(set, batch_size, &mut rng::substream(epoch_seed, rng::SHUFFLE, &[]))
}
