use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standalone accuracies (contributions), collaborative accuracies (rewards)
/// and their correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub coefficient: f64,
}

fn check_pair<T: Float>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least two participants, got {}",
            x.len()
        )));
    }
    for (name, v) in [("x", x), ("y", y)] {
        let first = v[0];
        if v.iter().all(|&a| a == first) {
            return Err(Error::DegenerateInput(format!("{name} has zero variance")));
        }
    }
    Ok(())
}

/// Sample Pearson correlation `sum((x-mx)(y-my)) / ((n-1) s_x s_y)` with
/// corrected standard deviations.
pub fn fairness<T: Float>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let n = T::from(x.len()).expect("length fits");
    let one = T::one();
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / n;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    let sx = (sxx / (n - one)).sqrt();
    let sy = (syy / (n - one)).sqrt();
    let r = sxy / ((n - one) * sx * sy);
    Ok(r.max(-one).min(one))
}

pub fn fairness_report(x: Vec<f64>, y: Vec<f64>) -> Result<FairnessReport> {
    let coefficient = fairness(&x, &y)?;
    Ok(FairnessReport { x, y, coefficient })
}

/// Ranks starting at 1; tied values share their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    fairness(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let x = [1.0, 2.0, 3.0, 4.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_relative_eq!(fairness(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(fairness(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(fairness(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fairness(&[0.9, 0.9], &[0.1, 0.2]), Err(Error::DegenerateInput(_))));
        assert!(matches!(fairness(&[0.1, 0.2], &[0.5, 0.5]), Err(Error::DegenerateInput(_))));
        assert!(matches!(fairness(&[0.1], &[0.5]), Err(Error::DegenerateInput(_))));
        assert!(matches!(fairness(&[0.1, 0.2], &[0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_relative_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[1.0, 8.0, 2.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_permutation_invariant(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..20),
            a in 0.01f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = fairness(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((r - fairness(&y, &x).unwrap()).abs() < 1e-12);
            let (rx, ry): (Vec<f64>, Vec<f64>) = pairs.iter().rev().copied().unzip();
            prop_assert!((r - fairness(&rx, &ry).unwrap()).abs() < 1e-12);
            let affine: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((fairness(&x, &affine).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
