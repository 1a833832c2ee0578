//! Server-side contribution scoring and admission control.
//!
//! Each round the server turns per-participant validation accuracies into
//! reputations: normalize over the reputable set, amplify with `sinh`, blend
//! 50/50 with the previous reputation, normalize, then evict members that
//! fall below the threshold one at a time (lowest first), renormalizing after
//! every eviction.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Mlp, ParameterVector};
use crate::scalar::Scalar;
use crate::update::{AggregationWeights, SparseUpdate};
use crate::ParticipantId;

/// Reputation floor below which a participant is isolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Fixed { value: f64 },
    /// `factor / |R|`, re-evaluated with the current size of the reputable set.
    PerMember { factor: f64 },
}

impl ThresholdRule {
    pub fn value_for(&self, members: usize) -> f64 {
        match *self {
            ThresholdRule::Fixed { value } => value,
            ThresholdRule::PerMember { factor } if members > 0 => factor / members as f64,
            ThresholdRule::PerMember { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            ThresholdRule::Fixed { value } => value,
            ThresholdRule::PerMember { factor } => factor,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("reputation threshold must be non-negative, got {v}")))
        }
    }
}

/// `sinh(alpha * x)`.
pub fn punish<T: Float>(normalized_vacc: T, alpha: T) -> T {
    (alpha * normalized_vacc).sinh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReputationState {
    reputations: BTreeMap<ParticipantId, f64>,
    reputable: BTreeSet<ParticipantId>,
    threshold: ThresholdRule,
    alpha: f64,
}

impl ReputationState {
    /// Every participant starts reputable with reputation `1/P`.
    pub fn uniform(
        participants: impl IntoIterator<Item = ParticipantId>,
        threshold: ThresholdRule,
        alpha: f64,
    ) -> Result<Self> {
        threshold.validate()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("punishment factor must be positive, got {alpha}")));
        }
        let reputable: BTreeSet<ParticipantId> = participants.into_iter().collect();
        if reputable.is_empty() {
            return Err(Error::InvalidConfig("no participants".into()));
        }
        let start = 1.0 / reputable.len() as f64;
        Ok(Self {
            reputations: reputable.iter().map(|&id| (id, start)).collect(),
            reputable,
            threshold,
            alpha,
        })
    }

    pub fn reputation(&self, id: ParticipantId) -> Option<f64> {
        self.reputations.get(&id).copied()
    }

    /// Reputations of all participants ever tracked; evicted ones keep the
    /// value they had when removed.
    pub fn reputations(&self) -> &BTreeMap<ParticipantId, f64> {
        &self.reputations
    }

    pub fn reputable_set(&self) -> &BTreeSet<ParticipantId> {
        &self.reputable
    }

    pub fn is_reputable(&self, id: ParticipantId) -> bool {
        self.reputable.contains(&id)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> ThresholdRule {
        self.threshold
    }

    /// Threshold at the current size of the reputable set.
    pub fn current_threshold(&self) -> f64 {
        self.threshold.value_for(self.reputable.len())
    }

    pub fn max_reputation(&self) -> f64 {
        self.reputable
            .iter()
            .map(|id| self.reputations[id])
            .fold(0.0, f64::max)
    }

    fn normalize(&mut self) {
        let sum: f64 = self.reputable.iter().map(|id| self.reputations[id]).sum();
        if sum > 0.0 {
            for id in &self.reputable {
                *self.reputations.get_mut(id).expect("tracked") /= sum;
            }
        }
    }

    /// Applies one round of validation accuracies. Returns the participants
    /// evicted this round in eviction order. On error the state is unchanged.
    pub fn update(&mut self, vaccs: &BTreeMap<ParticipantId, f64>) -> Result<Vec<ParticipantId>> {
        let mut next = self.clone();
        let evicted = next.apply(vaccs)?;
        *self = next;
        Ok(evicted)
    }

    fn apply(&mut self, vaccs: &BTreeMap<ParticipantId, f64>) -> Result<Vec<ParticipantId>> {
        let mut member_vaccs = Vec::with_capacity(self.reputable.len());
        for &id in &self.reputable {
            let v = vaccs.get(&id).copied().ok_or_else(|| {
                Error::InvalidConfig(format!("no validation accuracy for participant {id}"))
            })?;
            member_vaccs.push((id, v));
        }
        let total: f64 = member_vaccs.iter().map(|&(_, v)| v).sum();
        if total <= 0.0 {
            return Err(Error::ZeroValidationSum);
        }
        for (id, v) in member_vaccs {
            let fresh = punish(v / total, self.alpha);
            let previous = self.reputations[&id];
            self.reputations.insert(id, 0.5 * previous + 0.5 * fresh);
        }
        self.normalize();

        let mut evicted = Vec::new();
        loop {
            let threshold = self.current_threshold();
            let lowest = self
                .reputable
                .iter()
                .map(|&id| (id, self.reputations[&id]))
                .filter(|&(_, c)| c < threshold)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((id, _)) = lowest else { break };
            self.reputable.remove(&id);
            evicted.push(id);
            if self.reputable.is_empty() {
                return Err(Error::AllEvicted);
            }
            self.normalize();
        }
        Ok(evicted)
    }
}

/// Functional form of [`ReputationState::update`].
pub fn update_reputations(
    state: &ReputationState,
    vaccs: &BTreeMap<ParticipantId, f64>,
) -> Result<ReputationState> {
    let mut next = state.clone();
    next.update(vaccs)?;
    Ok(next)
}

/// Number of aggregated entries participant `id` may download:
/// `floor(c_j / max(c) * raw_j / max(raw) * agg_size)` over the reputable set.
pub fn allocation_count(
    state: &ReputationState,
    weights: &AggregationWeights,
    agg_size: usize,
    id: ParticipantId,
) -> Result<usize> {
    if !state.is_reputable(id) {
        return Err(Error::NotReputable(id));
    }
    let reputation_ratio = state.reputations[&id] / state.max_reputation();
    let weight_ratio = weights.raw(id)? / weights.max_raw(state.reputable_set())?;
    let count = (reputation_ratio * weight_ratio * agg_size as f64).floor();
    Ok((count.max(0.0) as usize).min(agg_size))
}

/// Models the server evaluates uploads against.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerModels<T> {
    /// Accumulates aggregated updates; consulted when `upload_rate < 1`.
    pub auxiliary: ParameterVector<T>,
    /// Per-participant replicas; consulted when `upload_rate == 1`.
    pub replicas: BTreeMap<ParticipantId, ParameterVector<T>>,
}

impl<T: Scalar> ServerModels<T> {
    /// All models start from the shared initialization.
    pub fn new(initial: &ParameterVector<T>, participants: impl IntoIterator<Item = ParticipantId>) -> Self {
        Self {
            auxiliary: initial.clone(),
            replicas: participants.into_iter().map(|id| (id, initial.clone())).collect(),
        }
    }

    /// Model an upload from `id` is applied to before validation.
    pub fn base_for(&self, upload_rate: f64, id: ParticipantId) -> Result<&ParameterVector<T>> {
        if upload_rate == 1.0 {
            self.replicas
                .get(&id)
                .ok_or_else(|| Error::InvalidConfig(format!("no server replica for participant {id}")))
        } else {
            Ok(&self.auxiliary)
        }
    }
}

/// Validation accuracy of `base + upload`, where `base` is the replica of
/// `id` at full upload rate and the auxiliary model otherwise.
pub fn validation_accuracy<T: Scalar>(
    mlp: &Mlp,
    upload: &SparseUpdate<T>,
    server: &ServerModels<T>,
    validation: &Dataset<T>,
    upload_rate: f64,
    id: ParticipantId,
) -> Result<f64> {
    let mut model = server.base_for(upload_rate, id)?.clone();
    if upload.dimension() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            actual: upload.dimension(),
        });
    }
    upload.add_to(&mut model)?;
    mlp.evaluate(&model, validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelArchitecture;
    use crate::update::WeightingMode;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn state(p: usize, threshold: ThresholdRule) -> ReputationState {
        ReputationState::uniform(0..p, threshold, 5.0).unwrap()
    }

    fn vaccs(values: &[f64]) -> BTreeMap<usize, f64> {
        values.iter().copied().enumerate().collect()
    }

    #[test]
    fn punish_values() {
        assert_eq!(punish(0.0, 5.0), 0.0);
        assert_relative_eq!(punish(0.2, 5.0), 1.0f64.sinh(), max_relative = 1e-15);
        assert_relative_eq!(punish(0.2f64, 5.0), 1.175_201_193_643_801_4, max_relative = 1e-15);
        assert!(punish(0.3, 5.0) > punish(0.29, 5.0));
    }

    #[test]
    fn symmetric_round_keeps_uniform_reputations() {
        let mut s = state(4, ThresholdRule::PerMember { factor: 1.0 / 3.0 });
        let evicted = s.update(&vaccs(&[0.7; 4])).unwrap();
        assert!(evicted.is_empty());
        for id in 0..4 {
            assert_relative_eq!(s.reputation(id).unwrap(), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_threshold_never_evicts() {
        let mut s = state(3, ThresholdRule::Fixed { value: 0.0 });
        for _ in 0..20 {
            assert!(s.update(&vaccs(&[0.9, 0.5, 0.0])).unwrap().is_empty());
        }
        assert_eq!(s.reputable_set().len(), 3);
    }

    #[test]
    fn zero_validation_sum_is_rejected_without_mutation() {
        let mut s = state(2, ThresholdRule::Fixed { value: 0.0 });
        let before = s.clone();
        assert!(matches!(s.update(&vaccs(&[0.0, 0.0])), Err(Error::ZeroValidationSum)));
        assert_eq!(s, before);
    }

    #[test]
    fn threshold_above_one_evicts_everyone() {
        let mut s = state(2, ThresholdRule::Fixed { value: 1.5 });
        assert!(matches!(s.update(&vaccs(&[0.5, 0.6])), Err(Error::AllEvicted)));
    }

    /// Straight-line re-derivation of one update step without eviction.
    fn reference_step(prev: &[f64], v: &[f64], alpha: f64) -> Vec<f64> {
        let vs: f64 = v.iter().sum();
        let blended: Vec<f64> = prev
            .iter()
            .zip(v)
            .map(|(p, x)| 0.5 * p + 0.5 * (alpha * x / vs).sinh())
            .collect();
        let s: f64 = blended.iter().sum();
        blended.iter().map(|b| b / s).collect()
    }

    #[test]
    fn free_rider_reputation_decays() {
        let v = [0.82, 0.84, 0.86, 0.88, 0.10];
        let mut s = state(5, ThresholdRule::Fixed { value: 0.0 });
        let mut reference = vec![0.2; 5];
        let mut last_fr = 0.2;
        for _ in 0..10 {
            s.update(&vaccs(&v)).unwrap();
            reference = reference_step(&reference, &v, 5.0);
            for id in 0..5 {
                assert_relative_eq!(s.reputation(id).unwrap(), reference[id], max_relative = 1e-12);
            }
            let fr = s.reputation(4).unwrap();
            assert!(fr < last_fr);
            last_fr = fr;
        }
        // Converged: the honest reputations barely move any more.
        let before: Vec<f64> = (0..4).map(|id| s.reputation(id).unwrap()).collect();
        s.update(&vaccs(&v)).unwrap();
        for id in 0..4 {
            assert!((s.reputation(id).unwrap() - before[id]).abs() < 1e-3);
        }
    }

    #[test]
    fn free_rider_is_evicted_and_others_renormalized() {
        let mut s = state(6, ThresholdRule::PerMember { factor: 1.0 / 3.0 });
        let mut evicted_at = None;
        for round in 0..10 {
            let ev = s.update(&vaccs(&[0.6, 0.62, 0.64, 0.66, 0.68, 0.1])).unwrap();
            if ev.contains(&5) {
                evicted_at = Some(round);
                break;
            }
        }
        assert!(evicted_at.is_some());
        assert!(!s.is_reputable(5));
        let sum: f64 = s.reputable_set().iter().map(|&id| s.reputation(id).unwrap()).sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn allocation_count_examples() {
        let s = state(3, ThresholdRule::Fixed { value: 0.0 });
        let w = AggregationWeights::new(WeightingMode::DataSize, [(0, 100.0), (1, 200.0), (2, 400.0)].into());
        assert_eq!(allocation_count(&s, &w, 1000, 2).unwrap(), 1000);
        assert_eq!(allocation_count(&s, &w, 1000, 1).unwrap(), 500);

        // Reputation half of the maximum and weight half of the maximum.
        let mut s = state(2, ThresholdRule::Fixed { value: 0.0 });
        s.reputations.insert(0, 1.0 / 3.0);
        s.reputations.insert(1, 2.0 / 3.0);
        let w = AggregationWeights::new(WeightingMode::ClassNumber, [(0, 5.0), (1, 10.0)].into());
        assert_eq!(allocation_count(&s, &w, 1000, 0).unwrap(), 250);
        assert_eq!(allocation_count(&s, &w, 1000, 1).unwrap(), 1000);

        s.reputable.remove(&0);
        assert!(matches!(allocation_count(&s, &w, 1000, 0), Err(Error::NotReputable(0))));
    }

    #[test]
    fn validation_accuracy_branches() {
        let mlp = Mlp::new(ModelArchitecture::relu(&[2, 2]).unwrap()).unwrap();
        let w0 = ParameterVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut server = ServerModels::new(&w0, [0, 1]);
        let val = Dataset::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1], 2).unwrap();

        let zero = SparseUpdate::empty(6);
        assert_eq!(validation_accuracy(&mlp, &zero, &server, &val, 0.1, 0).unwrap(), 0.5);

        // Makes feature 1 vote for class 1.
        let push = SparseUpdate::new(vec![(3, 5.0)], 6).unwrap();
        let before = server.clone();
        assert_eq!(validation_accuracy(&mlp, &push, &server, &val, 0.1, 0).unwrap(), 1.0);
        assert_eq!(validation_accuracy(&mlp, &push, &server, &val, 0.1, 1).unwrap(), 1.0);
        assert_eq!(server, before);

        // Full-upload branch reads the replica instead of the auxiliary model.
        server.replicas.insert(1, ParameterVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 9.0]));
        let mut expected = server.replicas[&1].clone();
        push.add_to(&mut expected).unwrap();
        assert_eq!(
            validation_accuracy(&mlp, &push, &server, &val, 1.0, 1).unwrap(),
            mlp.evaluate(&expected, &val).unwrap()
        );
        let wide = SparseUpdate::empty(7);
        assert!(matches!(
            validation_accuracy(&mlp, &wide, &server, &val, 0.1, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn normalization_and_threshold_hold(
            v in prop::collection::vec(0.0f64..1.0, 2..12),
            factor in 0.0f64..1.0,
            rounds in 1usize..4,
        ) {
            prop_assume!(v.iter().sum::<f64>() > 1e-9);
            let mut s = state(v.len(), ThresholdRule::PerMember { factor });
            for _ in 0..rounds {
                let vacc: BTreeMap<usize, f64> = s.reputable_set().iter().map(|&id| (id, v[id])).collect();
                if vacc.values().sum::<f64>() <= 0.0 {
                    break;
                }
                s.update(&vacc).unwrap();
                let members = s.reputable_set();
                prop_assert!(!members.is_empty());
                let sum: f64 = members.iter().map(|&id| s.reputation(id).unwrap()).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                let t = s.current_threshold();
                prop_assert!(members.iter().all(|&id| s.reputation(id).unwrap() >= t));
            }
        }

        #[test]
        fn equal_priors_preserve_vacc_order(v in prop::collection::vec(0.01f64..1.0, 2..10)) {
            let mut s = state(v.len(), ThresholdRule::Fixed { value: 0.0 });
            s.update(&vaccs(&v)).unwrap();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(s.reputation(i).unwrap() < s.reputation(j).unwrap());
                    }
                }
            }
        }

        #[test]
        fn allocation_is_monotone(
            c in 0.05f64..1.0, c2 in 0.05f64..1.0, n in 1.0f64..100.0, n2 in 1.0f64..100.0, size in 0usize..5000,
        ) {
            let mut s = state(2, ThresholdRule::Fixed { value: 0.0 });
            s.reputations.insert(1, 1.0);
            let count = |rep: f64, raw: f64| {
                let mut s = s.clone();
                s.reputations.insert(0, rep);
                let w = AggregationWeights::new(WeightingMode::DataSize, [(0, raw), (1, 100.0)].into());
                allocation_count(&s, &w, size, 0).unwrap()
            };
            let (lo_c, hi_c) = (c.min(c2), c.max(c2));
            let (lo_n, hi_n) = (n.min(n2), n.max(n2));
            prop_assert!(count(lo_c, n) <= count(hi_c, n));
            prop_assert!(count(c, lo_n) <= count(c, hi_n));
        }
    }
}
