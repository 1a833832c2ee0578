use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat model parameters or a flat update of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector<T>(Vec<T>);

impl<T: Scalar> ParameterVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        other.check_len(self.len())?;
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + b;
        }
        Ok(())
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: T, other: &Self) -> Result<()> {
        other.check_len(self.len())?;
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + factor * b;
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        other.check_len(self.len())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect(),
        ))
    }
}

impl<T> Index<usize> for ParameterVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for ParameterVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T> From<Vec<T>> for ParameterVector<T> {
    fn from(values: Vec<T>) -> Self {
        Self(values)
    }
}
