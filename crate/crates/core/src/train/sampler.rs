use std::ops::Range;

use rand::Rng;

use crate::corpus::{DatasetSplit, MixedDataset};
use crate::error::{Error, Result};

/// Item ranges negatives may be drawn from, one per dataset tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativePools {
    pools: Vec<(usize, Range<usize>)>,
}

impl NegativePools {
    pub fn single(split: &DatasetSplit) -> Self {
        NegativePools {
            pools: vec![(split.dataset_tag, 0..split.n_items())],
        }
    }

    pub fn from_mixed(mixed: &MixedDataset) -> Self {
        NegativePools {
            pools: (0..mixed.splits.len())
                .map(|k| (mixed.splits[k].dataset_tag, mixed.item_range(k)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    /// Position of the pool containing `item`.
    pub fn pool_of(&self, item: usize) -> Option<usize> {
        self.pools.iter().position(|(_, r)| r.contains(&item))
    }

    pub fn tag(&self, pool: usize) -> usize {
        self.pools[pool].0
    }

    pub fn range(&self, pool: usize) -> Range<usize> {
        self.pools[pool].1.clone()
    }
}

/// Draws `n` items uniformly with replacement from `pool`, redrawing any item
/// in the user's (sorted) training list.
pub fn sample_negatives<R: Rng + ?Sized>(
    user: usize,
    train: &[usize],
    pool: Range<usize>,
    dataset_tag: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let lo = train.partition_point(|&i| i < pool.start);
    let hi = train.partition_point(|&i| i < pool.end);
    if pool.is_empty() || hi - lo >= pool.len() {
        return Err(Error::PoolExhausted { user, dataset_tag });
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let j = rng.random_range(pool.clone());
        if train[lo..hi].binary_search(&j).is_err() {
            out.push(j);
        }
    }
    Ok(out)
}
