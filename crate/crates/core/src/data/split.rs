use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::DomainPool;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stratified split into `(train, eval)`. Each label stratum (unlabeled samples
/// form their own) contributes `round(n * train_fraction)` samples to train.
/// Both halves keep the pool's original sample order.
pub fn split<T: Scalar>(
    pool: &DomainPool<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(DomainPool<T>, DomainPool<T>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let two_way = train_fraction > 0.0 && train_fraction < 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; pool.len()];
    for stratum in [Some(0u8), Some(1), None] {
        let mut idx: Vec<usize> = (0..pool.len())
            .filter(|&i| pool.samples[i].label == stratum)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if two_way && idx.len() < 2 {
            return Err(Error::Data(format!(
                "pool {}: class {:?} has {} sample(s), fewer than the 2 splits",
                pool.name,
                stratum,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let pick = |keep: bool| DomainPool {
        name: pool.name.clone(),
        samples: pool
            .samples
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == keep)
            .map(|(s, _)| s.clone())
            .collect(),
    };
    Ok((pick(true), pick(false)))
}
