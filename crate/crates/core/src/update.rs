//! Participant-to-server update path: clipping, largest-values
//! sparsification, weighted aggregation and per-participant allocation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::scalar::Scalar;
use crate::ParticipantId;

/// Sorted `(index, value)` pairs over a dense space of `dimension` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate<T> {
    entries: Vec<(usize, T)>,
    dimension: usize,
}

impl<T: Scalar> SparseUpdate<T> {
    /// Indices must be strictly increasing and below `dimension`.
    pub fn new(entries: Vec<(usize, T)>, dimension: usize) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Format("sparse indices must be strictly increasing".into()));
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: i + 1,
                });
            }
        }
        Ok(Self { entries, dimension })
    }

    pub fn empty(dimension: usize) -> Self {
        Self {
            entries: Vec::new(),
            dimension,
        }
    }

    pub fn from_dense(dense: &ParameterVector<T>) -> Self {
        Self {
            entries: dense.iter().copied().enumerate().collect(),
            dimension: dense.len(),
        }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn densify(&self) -> ParameterVector<T> {
        let mut dense = ParameterVector::zeros(self.dimension);
        for &(i, v) in &self.entries {
            dense[i] = v;
        }
        dense
    }

    /// `target += factor * self`.
    pub fn add_scaled_to(&self, target: &mut ParameterVector<T>, factor: T) -> Result<()> {
        target.check_len(self.dimension)?;
        for &(i, v) in &self.entries {
            target[i] = target[i] + factor * v;
        }
        Ok(())
    }

    pub fn add_to(&self, target: &mut ParameterVector<T>) -> Result<()> {
        self.add_scaled_to(target, T::one())
    }
}

/// `round(rate * dimension)` with ties to even.
pub fn upload_count(rate: f64, dimension: usize) -> usize {
    ((rate * dimension as f64).round_ties_even() as usize).min(dimension)
}

pub fn check_upload_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "upload rate must lie in (0, 1], got {rate}"
        )))
    }
}

/// Elementwise clamp to `[-bound, bound]`.
pub fn clip<T: Scalar>(delta: &ParameterVector<T>, bound: T) -> ParameterVector<T> {
    ParameterVector::from_vec(
        delta
            .iter()
            .map(|&x| x.max(-bound).min(bound))
            .collect(),
    )
}

/// Larger magnitude first; equal magnitudes go to the lower index.
fn by_magnitude<T: Scalar>(values: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` largest-magnitude entries, ascending.
pub fn largest_indices<T: Scalar>(values: &[T], k: usize) -> Vec<usize> {
    let k = k.min(values.len());
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_magnitude(values));
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

/// Keeps the `round(rate * d)` entries of largest magnitude.
pub fn sparsify<T: Scalar>(delta: &ParameterVector<T>, upload_rate: f64) -> Result<SparseUpdate<T>> {
    check_upload_rate(upload_rate)?;
    if upload_rate == 1.0 {
        return Ok(SparseUpdate::from_dense(delta));
    }
    let keep = upload_count(upload_rate, delta.len());
    let values = delta.as_slice();
    let entries = largest_indices(values, keep)
        .into_iter()
        .map(|i| (i, values[i]))
        .collect();
    Ok(SparseUpdate {
        entries,
        dimension: delta.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Shard example counts `n_j`.
    DataSize,
    /// Number of classes present in each shard.
    ClassNumber,
}

/// Per-participant raw weights (`n_j` or `class_j`) and how to normalize them.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    pub mode: WeightingMode,
    pub raw: BTreeMap<ParticipantId, f64>,
}

impl AggregationWeights {
    pub fn new(mode: WeightingMode, raw: BTreeMap<ParticipantId, f64>) -> Self {
        Self { mode, raw }
    }

    pub fn raw(&self, id: ParticipantId) -> Result<f64> {
        self.raw.get(&id).copied().ok_or(Error::MissingWeight(id))
    }

    fn member_values(&self, members: &BTreeSet<ParticipantId>) -> Result<Vec<f64>> {
        members.iter().map(|&m| self.raw(m)).collect()
    }

    /// Largest raw weight among `members`.
    pub fn max_raw(&self, members: &BTreeSet<ParticipantId>) -> Result<f64> {
        Ok(self
            .member_values(members)?
            .into_iter()
            .fold(0.0, f64::max))
    }

    /// Aggregation coefficient: `n_j / sum(n)` or `class_j / max(class)`,
    /// with sum and max taken over `members`.
    pub fn aggregation_weight(&self, id: ParticipantId, members: &BTreeSet<ParticipantId>) -> Result<f64> {
        let own = self.raw(id)?;
        let values = self.member_values(members)?;
        let denom = match self.mode {
            WeightingMode::DataSize => values.iter().sum::<f64>(),
            WeightingMode::ClassNumber => values.iter().copied().fold(0.0, f64::max),
        };
        if denom <= 0.0 {
            return Err(Error::InvalidConfig("aggregation weights must be positive".into()));
        }
        Ok(own / denom)
    }

    /// Factor applied to a participant's own upload when it integrates its
    /// allocation: `raw_j / max(raw)` over `members`, in both modes.
    pub fn adjust_factor(&self, id: ParticipantId, members: &BTreeSet<ParticipantId>) -> Result<f64> {
        let max = self.max_raw(members)?;
        if max <= 0.0 {
            return Err(Error::InvalidConfig("aggregation weights must be positive".into()));
        }
        Ok(self.raw(id)? / max)
    }
}

/// Weighted sum of the members' sparse updates as a dense vector.
///
/// Updates from participants outside `members` are ignored.
pub fn aggregate<T: Scalar>(
    updates: &BTreeMap<ParticipantId, SparseUpdate<T>>,
    weights: &AggregationWeights,
    members: &BTreeSet<ParticipantId>,
) -> Result<ParameterVector<T>> {
    let dimension = updates
        .values()
        .next()
        .map(SparseUpdate::dimension)
        .ok_or_else(|| Error::InvalidConfig("no updates to aggregate".into()))?;
    let mut total = ParameterVector::zeros(dimension);
    for (&id, update) in updates {
        if update.dimension() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: update.dimension(),
            });
        }
        if !members.contains(&id) {
            continue;
        }
        let w = T::from_f64_lossy(weights.aggregation_weight(id, members)?);
        update.add_scaled_to(&mut total, w)?;
    }
    Ok(total)
}

/// What a participant downloads: the `count` largest-magnitude aggregated
/// entries minus `adjust_factor` times its own upload.
///
/// The subtraction covers every index of `own_upload`, so the result can hold
/// indices outside the selected top entries.
pub fn allocate<T: Scalar>(
    agg: &ParameterVector<T>,
    count: usize,
    own_upload: &SparseUpdate<T>,
    adjust_factor: f64,
) -> Result<SparseUpdate<T>> {
    if count > agg.len() {
        return Err(Error::CountOutOfRange {
            count,
            dimension: agg.len(),
        });
    }
    if own_upload.dimension() != agg.len() {
        return Err(Error::DimensionMismatch {
            expected: agg.len(),
            actual: own_upload.dimension(),
        });
    }
    if !(0.0..=1.0).contains(&adjust_factor) {
        return Err(Error::InvalidConfig(format!(
            "adjust factor must lie in [0, 1], got {adjust_factor}"
        )));
    }
    let factor = T::from_f64_lossy(adjust_factor);
    let selected = largest_indices(agg.as_slice(), count);

    let mut entries = Vec::with_capacity(selected.len() + own_upload.len());
    let (mut a, mut b) = (selected.iter().peekable(), own_upload.entries().iter().peekable());
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(&&i), Some(&&(j, v))) if i == j => {
                a.next();
                b.next();
                (i, agg[i] - factor * v)
            }
            (Some(&&i), Some(&&(j, _))) if i < j => {
                a.next();
                (i, agg[i])
            }
            (Some(&&i), None) => {
                a.next();
                (i, agg[i])
            }
            (_, Some(&&(j, v))) => {
                b.next();
                (j, -(factor * v))
            }
            (None, None) => break,
        };
        entries.push(next);
    }
    Ok(SparseUpdate {
        entries,
        dimension: agg.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParameterVector<f64> {
        ParameterVector::from_vec(v.to_vec())
    }

    fn members(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn clip_saturates() {
        let c = clip(&pv(&[0.05, -0.02, 0.003, -0.01]), 0.01);
        assert_eq!(c.as_slice(), &[0.01, -0.01, 0.003, -0.01]);
        let inside = pv(&[0.001, -0.009, 0.0]);
        assert_eq!(clip(&inside, 0.01), inside);
    }

    #[test]
    fn sparsify_takes_largest_magnitudes() {
        let s = sparsify(&pv(&[0.02, -0.05, 0.001, 0.03]), 0.5).unwrap();
        assert_eq!(s.entries(), &[(1, -0.05), (3, 0.03)]);
        let tie = sparsify(&pv(&[0.01, -0.01]), 0.5).unwrap();
        assert_eq!(tie.entries(), &[(0, 0.01)]);
        let full = sparsify(&pv(&[0.0, 1.0, -2.0]), 1.0).unwrap();
        assert_eq!(full.densify(), pv(&[0.0, 1.0, -2.0]));
        assert_eq!(full.len(), 3);
        assert!(sparsify(&pv(&[1.0]), 0.0).is_err());
        assert!(sparsify(&pv(&[1.0]), 1.5).is_err());
    }

    #[test]
    fn upload_count_rounds_half_to_even() {
        assert_eq!(upload_count(0.5, 5), 2);
        assert_eq!(upload_count(0.5, 7), 4);
        assert_eq!(upload_count(0.1, 109_386), 10_939);
    }

    #[test]
    fn sparse_update_validates_indices() {
        assert!(SparseUpdate::new(vec![(1, 1.0), (1, 2.0)], 4).is_err());
        assert!(SparseUpdate::new(vec![(2, 1.0), (1, 2.0)], 4).is_err());
        assert!(SparseUpdate::new(vec![(4, 1.0)], 4).is_err());
        assert!(SparseUpdate::new(vec![(0, 1.0), (3, 2.0)], 4).is_ok());
    }

    #[test]
    fn aggregate_single_participant() {
        let up = SparseUpdate::new(vec![(1, 0.5), (2, -0.25)], 4).unwrap();
        let w = AggregationWeights::new(WeightingMode::DataSize, [(0, 10.0)].into());
        let agg = aggregate(&[(0, up.clone())].into(), &w, &members(&[0])).unwrap();
        assert_eq!(agg, up.densify());
    }

    #[test]
    fn aggregate_disjoint_data_size_weights() {
        let a = SparseUpdate::new(vec![(0, 3.0), (2, 6.0)], 4).unwrap();
        let b = SparseUpdate::new(vec![(1, 3.0), (3, -6.0)], 4).unwrap();
        let w = AggregationWeights::new(WeightingMode::DataSize, [(0, 100.0), (1, 200.0)].into());
        let agg = aggregate(&[(0, a), (1, b)].into(), &w, &members(&[0, 1])).unwrap();
        let expected = [1.0, 2.0, 2.0, -4.0];
        for (x, e) in agg.iter().zip(expected) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn aggregate_skips_non_members_and_checks_inputs() {
        let a = SparseUpdate::new(vec![(0, 1.0)], 2).unwrap();
        let b = SparseUpdate::new(vec![(1, 1.0)], 2).unwrap();
        let w = AggregationWeights::new(WeightingMode::ClassNumber, [(0, 2.0), (1, 4.0)].into());
        let agg = aggregate(&[(0, a.clone()), (1, b)].into(), &w, &members(&[0])).unwrap();
        assert_eq!(agg.as_slice(), &[1.0, 0.0]);

        let missing = AggregationWeights::new(WeightingMode::DataSize, [(1, 1.0)].into());
        assert!(matches!(
            aggregate(&[(0, a.clone())].into(), &missing, &members(&[0])),
            Err(Error::MissingWeight(0))
        ));
        let wide = SparseUpdate::new(vec![(0, 1.0)], 3).unwrap();
        assert!(matches!(
            aggregate(&[(0, a), (1, wide)].into(), &w, &members(&[0, 1])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn class_number_weights_use_max() {
        let w = AggregationWeights::new(WeightingMode::ClassNumber, [(0, 1.0), (1, 5.0), (2, 10.0)].into());
        let all = members(&[0, 1, 2]);
        assert_eq!(w.aggregation_weight(1, &all).unwrap(), 0.5);
        assert_eq!(w.adjust_factor(0, &all).unwrap(), 0.1);
        let d = AggregationWeights::new(WeightingMode::DataSize, [(0, 1.0), (1, 3.0)].into());
        assert_eq!(d.aggregation_weight(0, &members(&[0, 1])).unwrap(), 0.25);
        assert_eq!(d.adjust_factor(0, &members(&[0, 1])).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn allocate_examples() {
        let agg = pv(&[4e-3, 3e-3, 2e-3, 1e-3]);
        let own = SparseUpdate::new(vec![(0, 2e-3)], 4).unwrap();
        let got = allocate(&agg, 2, &own, 0.5).unwrap();
        assert_eq!(got.indices().collect::<Vec<_>>(), vec![0, 1]);
        assert_relative_eq!(got.entries()[0].1, 3e-3, max_relative = 1e-12);
        assert_relative_eq!(got.entries()[1].1, 3e-3, max_relative = 1e-12);

        let full = allocate(&agg, 4, &own, 0.0).unwrap();
        assert_eq!(full.densify(), agg);

        let nothing = allocate(&agg, 0, &own, 0.5).unwrap();
        assert_eq!(nothing.entries(), &[(0, -1e-3)]);

        let outside = SparseUpdate::new(vec![(3, 2e-3)], 4).unwrap();
        let got = allocate(&agg, 1, &outside, 1.0).unwrap();
        assert_eq!(got.entries(), &[(0, 4e-3), (3, -2e-3)]);

        assert!(matches!(
            allocate(&agg, 5, &own, 0.5),
            Err(Error::CountOutOfRange { count: 5, dimension: 4 })
        ));
    }

    fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-0.1f64..0.1, 1..max_len)
    }

    proptest! {
        #[test]
        fn clip_is_idempotent_and_bounded(v in vector(200), bound in 1e-4f64..0.2) {
            let once = clip(&pv(&v), bound);
            prop_assert_eq!(clip(&once, bound), once.clone());
            prop_assert!(once.iter().all(|x| x.abs() <= bound));
        }

        #[test]
        fn sparsify_keeps_the_largest(v in vector(200), rate in 0.01f64..=1.0) {
            let s = sparsify(&pv(&v), rate).unwrap();
            prop_assert_eq!(s.len(), upload_count(rate, v.len()));
            let chosen: BTreeSet<usize> = s.indices().collect();
            let min_in = s.entries().iter().map(|e| e.1.abs()).fold(f64::INFINITY, f64::min);
            let max_out = (0..v.len()).filter(|i| !chosen.contains(i)).map(|i| v[i].abs()).fold(0.0, f64::max);
            prop_assert!(s.is_empty() || min_in >= max_out);
            for &(i, x) in s.entries() {
                prop_assert_eq!(x, v[i]);
            }
        }

        #[test]
        fn aggregate_is_linear_and_order_free(
            a in prop::collection::vec(-1.0f64..1.0, 8),
            b in prop::collection::vec(-1.0f64..1.0, 8),
            na in 1.0f64..100.0,
            nb in 1.0f64..100.0,
            scale in -3.0f64..3.0,
        ) {
            let ids = members(&[0, 1]);
            let w = AggregationWeights::new(WeightingMode::DataSize, [(0, na), (1, nb)].into());
            let sa = SparseUpdate::from_dense(&pv(&a));
            let sb = SparseUpdate::from_dense(&pv(&b));
            let ab = aggregate(&[(0, sa.clone()), (1, sb.clone())].into(), &w, &ids).unwrap();

            let swapped = AggregationWeights::new(WeightingMode::DataSize, [(0, nb), (1, na)].into());
            let ba = aggregate(&[(0, sb.clone()), (1, sa.clone())].into(), &swapped, &ids).unwrap();
            for (x, y) in ab.iter().zip(ba.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }

            let scaled_a: Vec<f64> = a.iter().map(|x| x * scale).collect();
            let sa2 = SparseUpdate::from_dense(&pv(&scaled_a));
            let lin = aggregate(&[(0, sa2), (1, sb)].into(), &w, &ids).unwrap();
            let wa = na / (na + nb);
            for k in 0..8 {
                let expected = ab[k] + (scale - 1.0) * wa * a[k];
                prop_assert!((lin[k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_uniform_aggregate_is_the_mean() {
        let vs = [vec![1.0, -2.0, 0.5], vec![3.0, 0.0, 0.5], vec![-1.0, 4.0, 2.0]];
        let updates: BTreeMap<usize, SparseUpdate<f64>> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (i, sparsify(&pv(v), 1.0).unwrap()))
            .collect();
        let w = AggregationWeights::new(WeightingMode::DataSize, [(0, 7.0), (1, 7.0), (2, 7.0)].into());
        let agg = aggregate(&updates, &w, &members(&[0, 1, 2])).unwrap();
        for k in 0..3 {
            let mean = vs.iter().map(|v| v[k]).sum::<f64>() / 3.0;
            assert_relative_eq!(agg[k], mean, epsilon = 1e-15);
        }
    }
}
