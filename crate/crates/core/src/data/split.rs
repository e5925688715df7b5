use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::TripletDataset;
use crate::error::{Error, Result};

/// Number of held-out trajectories: `round(fraction * n)`, at least one and
/// leaving at least one for training.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Seeded split at trajectory granularity; each side keeps the original order.
pub fn split(
    dataset: &TripletDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(TripletDataset, TripletDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.num_trajectories();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} trajectory; need at least 2"
        )));
    }
    let (train_idx, test_idx) = split_indices(n, test_count(n, test_fraction), seed);
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

fn split_indices(n: usize, n_test: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}
