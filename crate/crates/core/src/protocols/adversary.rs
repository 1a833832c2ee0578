use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;
use crate::update::{check_upload_rate, upload_count, SparseUpdate};

/// Uploads uniform noise from `[-bound, bound]` at random indices, with the
/// same sparsity an honest participant would use.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeRider {
    pub dimension: usize,
    pub seed: u64,
    pub upload_rate: f64,
    pub bound: f64,
}

/// Free rider with the default clip range `[-0.01, 0.01]` and dense uploads.
pub fn make_free_rider(dimension: usize, seed: u64) -> FreeRider {
    FreeRider {
        dimension,
        seed,
        upload_rate: 1.0,
        bound: 0.01,
    }
}

impl FreeRider {
    pub fn with_upload_rate(mut self, rate: f64) -> Result<Self> {
        check_upload_rate(rate)?;
        self.upload_rate = rate;
        Ok(self)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    /// Deterministic in `(seed, round)`.
    pub fn upload<T: Scalar>(&self, round: usize) -> SparseUpdate<T> {
        let mut rng = stream(self.seed, Purpose::Adversary, &[round as u64]);
        let count = upload_count(self.upload_rate, self.dimension);
        let mut indices = sample(&mut rng, self.dimension, count).into_vec();
        indices.sort_unstable();
        let entries = indices
            .into_iter()
            .map(|i| (i, T::from_f64_lossy(rng.random_range(-self.bound..=self.bound))))
            .collect();
        SparseUpdate::new(entries, self.dimension).expect("sorted distinct indices")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uploads_are_bounded_sparse_and_round_keyed() {
        let fr = make_free_rider(1000, 3).with_upload_rate(0.1).unwrap();
        let a: SparseUpdate<f64> = fr.upload(0);
        assert_eq!(a.len(), 100);
        assert!(a.entries().iter().all(|&(_, v)| v.abs() <= 0.01));
        assert_eq!(a, fr.upload(0));
        assert_ne!(a, fr.upload::<f64>(1));
    }

    #[test]
    fn noise_is_centered() {
        let fr = make_free_rider(10_000, 17);
        let u: SparseUpdate<f64> = fr.upload(0);
        let n = u.len() as f64;
        let mean = u.entries().iter().map(|e| e.1).sum::<f64>() / n;
        // Uniform on [-b, b] has variance b^2 / 3.
        let sigma = (0.01f64 * 0.01 / 3.0).sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    }
}
