//! The reputation-mediated fair protocol.
//!
//! One round, in order:
//!
//! 1. every reputable participant trains locally, clips its update and
//!    uploads the largest `upload_rate` fraction of it;
//! 2. the server aggregates the uploads of the reputable set;
//! 3. the server scores each upload on the validation set, against the
//!    participant's replica at full upload rate and against the auxiliary
//!    model otherwise, then advances those models;
//! 4. reputations are updated and low-reputation participants evicted;
//! 5. each remaining participant downloads its reputation-scaled share of
//!    the aggregate, minus a weighted echo of its own upload, and integrates
//!    it together with its local update.

use std::collections::{BTreeMap, BTreeSet};

use super::{Behavior, Participant, ParticipantRecord, ProtocolConfig, RoundMetrics};
use crate::error::{Error, Result};
use crate::model::PRETRAIN_ROUND_KEY;
use crate::model::{Dataset, Mlp, ParameterVector};
use crate::reputation::{allocation_count, validation_accuracy, ReputationState, ServerModels};
use crate::scalar::Scalar;
use crate::update::{aggregate, allocate, clip, sparsify, AggregationWeights, SparseUpdate, WeightingMode};
use crate::ParticipantId;

/// What the server saw and decided during one round.
#[derive(Debug, Clone, PartialEq)]
pub struct CfflRoundOutcome {
    pub metrics: RoundMetrics,
    /// Participants whose uploads entered the aggregate, ascending.
    pub aggregated_from: Vec<ParticipantId>,
    pub evicted: Vec<ParticipantId>,
    /// Nonzero entries of the aggregated update.
    pub aggregate_size: usize,
}

pub struct CfflRun<'a, T> {
    mlp: &'a Mlp,
    config: ProtocolConfig,
    participants: Vec<Participant<T>>,
    server: ServerModels<T>,
    reputation: ReputationState,
    weights: AggregationWeights,
    validation: &'a Dataset<T>,
    test: &'a Dataset<T>,
    frozen: BTreeMap<ParticipantId, ParticipantRecord>,
    round: usize,
}

impl<'a, T: Scalar> CfflRun<'a, T> {
    /// All participants must start from the same parameters; the server's
    /// auxiliary model and replicas are initialized from them.
    pub fn new(
        mlp: &'a Mlp,
        participants: Vec<Participant<T>>,
        config: ProtocolConfig,
        validation: &'a Dataset<T>,
        test: &'a Dataset<T>,
    ) -> Result<Self> {
        config.validate()?;
        let first = participants
            .first()
            .ok_or_else(|| Error::InvalidConfig("no participants".into()))?;
        let initial = first.model.clone();
        initial.check_len(mlp.parameter_count())?;
        for (i, p) in participants.iter().enumerate() {
            if p.id != i {
                return Err(Error::InvalidConfig(format!(
                    "participant at position {i} has id {}",
                    p.id
                )));
            }
            if p.model != initial {
                return Err(Error::InvalidConfig(format!(
                    "participant {i} does not start from the shared initial model"
                )));
            }
        }
        let ids: Vec<ParticipantId> = participants.iter().map(|p| p.id).collect();
        let raw = participants
            .iter()
            .map(|p| {
                let w = match config.weighting {
                    WeightingMode::DataSize => p.claimed_examples,
                    WeightingMode::ClassNumber => p.claimed_classes,
                };
                (p.id, w as f64)
            })
            .collect();
        Ok(Self {
            mlp,
            server: ServerModels::new(&initial, ids.iter().copied()),
            reputation: ReputationState::uniform(ids, config.threshold, config.alpha)?,
            weights: AggregationWeights::new(config.weighting, raw),
            config,
            participants,
            validation,
            test,
            frozen: BTreeMap::new(),
            round: 0,
        })
    }

    pub fn participants(&self) -> &[Participant<T>] {
        &self.participants
    }

    pub fn reputation(&self) -> &ReputationState {
        &self.reputation
    }

    pub fn server(&self) -> &ServerModels<T> {
        &self.server
    }

    pub fn rounds_completed(&self) -> usize {
        self.round
    }

    /// Local-only training before the first round. Free riders skip it.
    pub fn pretrain(&mut self) -> Result<()> {
        if self.config.pretrain_epochs == 0 {
            return Ok(());
        }
        let lr = self.config.sgd.learning_rate_at(0);
        for p in self.participants.iter_mut().filter(|p| p.is_honest()) {
            self.mlp.train_epochs(
                &mut p.model,
                &p.shard.data,
                lr,
                self.config.sgd.batch_size,
                self.config.pretrain_epochs,
                p.sgd_seed,
                PRETRAIN_ROUND_KEY,
            )?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<CfflRoundOutcome> {
        let round = self.round;
        let cfg = &self.config;
        let dimension = self.mlp.parameter_count();
        let bound = T::from_f64_lossy(cfg.sgd.clip_bound);
        let members: BTreeSet<ParticipantId> = self.reputation.reputable_set().clone();

        // Participant tier: local training and upload.
        let mut local: BTreeMap<ParticipantId, ParameterVector<T>> = BTreeMap::new();
        let mut uploads: BTreeMap<ParticipantId, SparseUpdate<T>> = BTreeMap::new();
        for &id in &members {
            let p = &self.participants[id];
            let (delta, upload) = match &p.behavior {
                Behavior::Honest => {
                    let raw = self.mlp.local_sgd(&p.model, &p.shard.data, &cfg.sgd, round, p.sgd_seed)?;
                    let clipped = clip(&raw, bound);
                    let upload = sparsify(&clipped, cfg.upload_rate)?;
                    (if cfg.clip_local_update { clipped } else { raw }, upload)
                }
                Behavior::FreeRider(adversary) => {
                    (ParameterVector::zeros(dimension), adversary.upload(round))
                }
            };
            local.insert(id, delta);
            uploads.insert(id, upload);
        }

        // Server tier.
        let aggregated = aggregate(&uploads, &self.weights, &members)?;
        let mut vaccs = BTreeMap::new();
        for (&id, upload) in &uploads {
            let v = validation_accuracy(self.mlp, upload, &self.server, self.validation, cfg.upload_rate, id)?;
            vaccs.insert(id, v);
        }
        if cfg.upload_rate == 1.0 {
            for (&id, upload) in &uploads {
                let replica = self.server.replicas.get_mut(&id).expect("replica per participant");
                upload.add_to(replica)?;
            }
        } else {
            self.server.auxiliary.add_assign(&aggregated)?;
        }
        let evicted = self.reputation.update(&vaccs)?;

        let aggregate_size = aggregated.iter().filter(|v| !v.is_zero()).count();
        let remaining = self.reputation.reputable_set().clone();
        let mut allocations = BTreeMap::new();
        for &id in &remaining {
            let count = allocation_count(&self.reputation, &self.weights, aggregate_size, id)?;
            let factor = self.weights.adjust_factor(id, &remaining)?;
            let download = allocate(&aggregated, count, &uploads[&id], factor)?;
            let model = &mut self.participants[id].model;
            model.add_assign(&local[&id])?;
            download.add_to(model)?;
            if !model.is_finite() {
                return Err(Error::NonFinite);
            }
            allocations.insert(id, count);
        }

        // Metrics.
        let mut records = Vec::with_capacity(self.participants.len());
        for p in &self.participants {
            let id = p.id;
            let record = if remaining.contains(&id) {
                ParticipantRecord {
                    participant: id,
                    validation_accuracy: vaccs.get(&id).copied(),
                    test_accuracy: self.mlp.evaluate(&p.model, self.test)?,
                    reputation: self.reputation.reputation(id),
                    allocation_count: allocations.get(&id).copied(),
                    evicted: false,
                }
            } else if let Some(frozen) = self.frozen.get(&id) {
                frozen.clone()
            } else {
                let record = ParticipantRecord {
                    participant: id,
                    validation_accuracy: vaccs.get(&id).copied(),
                    test_accuracy: self.mlp.evaluate(&p.model, self.test)?,
                    reputation: self.reputation.reputation(id),
                    allocation_count: None,
                    evicted: true,
                };
                self.frozen.insert(id, record.clone());
                record
            };
            records.push(record);
        }

        self.round += 1;
        Ok(CfflRoundOutcome {
            metrics: RoundMetrics {
                round: self.round,
                records,
            },
            aggregated_from: members.into_iter().collect(),
            evicted,
            aggregate_size,
        })
    }
}

/// Pretrains if configured, then runs `config.rounds` rounds.
pub fn run_cffl<T: Scalar>(
    mlp: &Mlp,
    participants: Vec<Participant<T>>,
    config: &ProtocolConfig,
    validation: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<Vec<RoundMetrics>> {
    let mut run = CfflRun::new(mlp, participants, config.clone(), validation, test)?;
    run.pretrain()?;
    (0..config.rounds)
        .map(|_| run.step().map(|o| o.metrics))
        .collect()
}
