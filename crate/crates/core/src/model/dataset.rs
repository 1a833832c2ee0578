use std::collections::BTreeSet;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature matrix (one row per example) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::InvalidConfig("class_count must be positive".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Format(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn empty(feature_width: usize, class_count: usize) -> Self {
        Self {
            features: Array2::zeros((0, feature_width)),
            labels: Vec::new(),
            class_count,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Distinct labels present, ascending.
    pub fn present_classes(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    /// Per-class example counts, indexed by label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_count: self.class_count,
        }
    }
}
