use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

/// Gaussian blobs: one isotropic cluster per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub examples: usize,
    pub features: usize,
    pub classes: usize,
    /// Cluster centers are drawn uniformly from `[-separation, separation]^d`.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_separation() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.5
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            examples: 2000,
            features: 16,
            classes: 4,
            separation: default_separation(),
            noise: default_noise(),
        }
    }
}

/// Draws a class-balanced blob dataset. `stream` separates independent draws
/// (train pool vs test set) that must share cluster centers.
pub fn gaussian_blobs<T: Scalar>(spec: &SyntheticSpec, seed: u64, draw: u64) -> Result<Dataset<T>> {
    if spec.features == 0 || spec.classes == 0 {
        return Err(Error::InvalidConfig(
            "synthetic data needs at least one feature and one class".into(),
        ));
    }
    if !(spec.noise >= 0.0 && spec.separation >= 0.0) {
        return Err(Error::InvalidConfig("noise and separation must be non-negative".into()));
    }
    let mut centers_rng = stream(seed, Purpose::Synthetic, &[0]);
    let centers: Vec<f64> = (0..spec.classes * spec.features)
        .map(|_| centers_rng.random_range(-spec.separation..=spec.separation))
        .collect();

    let mut rng = stream(seed, Purpose::Synthetic, &[1, draw]);
    let mut labels: Vec<usize> = (0..spec.examples).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let normal = Normal::new(0.0, spec.noise).expect("noise validated");
    let mut x = Array2::zeros((spec.examples, spec.features));
    for (i, &label) in labels.iter().enumerate() {
        for k in 0..spec.features {
            let v = centers[label * spec.features + k] + normal.sample(&mut rng);
            x[[i, k]] = T::from_f64_lossy(v);
        }
    }
    Dataset::new(x, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let spec = SyntheticSpec {
            examples: 100,
            ..SyntheticSpec::default()
        };
        let a: Dataset<f64> = gaussian_blobs(&spec, 1, 0).unwrap();
        assert_eq!(a.class_histogram(), vec![25; 4]);
        assert_eq!(a, gaussian_blobs(&spec, 1, 0).unwrap());
        assert_ne!(a, gaussian_blobs(&spec, 1, 1).unwrap());
    }
}
