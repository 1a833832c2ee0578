use rand::seq::SliceRandom;

use super::partition::largest_remainder;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

/// Holds out `round(fraction * n)` randomly chosen rows as a validation set.
///
/// Returns `(remaining training rows, validation rows)`, both in the shuffled
/// order.
pub fn split_validation<T: Scalar>(
    train: &Dataset<T>,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let held_out = (fraction * train.len() as f64).round_ties_even() as usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream(seed, Purpose::Validation, &[]));
    let (val, rest) = order.split_at(held_out);
    Ok((train.select(rest), train.select(val)))
}

/// Class-stratified train/test split.
///
/// The train side gets `floor(train_fraction * n)` rows; that budget is spread
/// over the classes in proportion to their sizes with largest-remainder
/// rounding, and each class contributes a random subset of its rows.
pub fn stratified_split<T: Scalar>(
    data: &Dataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let train_total = (train_fraction * data.len() as f64).floor() as usize;
    let histogram = data.class_histogram();
    let weights: Vec<f64> = histogram.iter().map(|&c| c as f64).collect();
    let quotas = largest_remainder(train_total, &weights);

    let mut train_rows = Vec::with_capacity(train_total);
    let mut test_rows = Vec::with_capacity(data.len() - train_total);
    for (class, &quota) in quotas.iter().enumerate() {
        let mut rows: Vec<usize> = (0..data.len())
            .filter(|&r| data.labels()[r] == class)
            .collect();
        rows.shuffle(&mut stream(seed, Purpose::Split, &[class as u64]));
        let quota = quota.min(rows.len());
        train_rows.extend_from_slice(&rows[..quota]);
        test_rows.extend_from_slice(&rows[quota..]);
    }
    let n_classes = histogram.len() as u64;
    train_rows.shuffle(&mut stream(seed, Purpose::Split, &[n_classes]));
    test_rows.shuffle(&mut stream(seed, Purpose::Split, &[n_classes + 1]));
    Ok((data.select(&train_rows), data.select(&test_rows)))
}
