use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn check(n: usize, test_fraction: f64) -> Result<usize> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CanopyError::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 4 {
        return Err(CanopyError::Config(format!("need at least 4 samples to split, got {n}")));
    }
    Ok((test_fraction * n as f64).round() as usize)
}

/// Uniform random hold-out of `round(test_fraction·n)` samples.
pub fn split_dataset(n: usize, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    let n_test = check(n, test_fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(DatasetSplit { train, test, seed })
}

/// Hold out whole runs of `block` consecutive samples. Patches are cut
/// row-major, so consecutive indices are spatial neighbours and this limits
/// leakage between adjacent train and test windows. Blocks are added until
/// the test set reaches `round(test_fraction·n)`, so it may overshoot by
/// less than one block.
pub fn split_dataset_blocked(
    n: usize,
    test_fraction: f64,
    block: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let n_test = check(n, test_fraction)?;
    if block == 0 {
        return Err(CanopyError::Config("split block size must be ≥ 1".into()));
    }
    let mut blocks: Vec<usize> = (0..n.div_ceil(block)).collect();
    blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_test = vec![false; n];
    let mut count = 0;
    for b in blocks {
        if count >= n_test {
            break;
        }
        for i in b * block..((b + 1) * block).min(n) {
            in_test[i] = true;
            count += 1;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    if train.is_empty() {
        return Err(CanopyError::Config(format!(
            "block size {block} leaves no training samples out of {n}"
        )));
    }
    Ok(DatasetSplit { train, test, seed })
}
