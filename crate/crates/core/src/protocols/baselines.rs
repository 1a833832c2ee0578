//! Standalone training and the round-robin FedAvg and DSSGD baselines.
//!
//! Participants are visited in ascending id order every round. Test accuracy
//! is sampled on each participant's own model right after its download and
//! local training step, so per-participant curves exist for every framework.

use std::cmp::Reverse;

use super::{Behavior, Participant, ParticipantRecord, ProtocolConfig, RoundMetrics};
use crate::error::{Error, Result};
use crate::model::{Dataset, Mlp, ParameterVector};
use crate::scalar::Scalar;
use crate::update::{clip, sparsify, upload_count};
use crate::ParticipantId;

/// Each participant trains `rounds x local_epochs` epochs on its own shard
/// with no communication. Free riders have nothing to train on and are left
/// out of the metrics.
pub fn run_standalone<T: Scalar>(
    mlp: &Mlp,
    mut participants: Vec<Participant<T>>,
    config: &ProtocolConfig,
    test: &Dataset<T>,
) -> Result<Vec<RoundMetrics>> {
    config.sgd.validate()?;
    let mut out = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let mut records = Vec::new();
        for p in participants.iter_mut().filter(|p| p.is_honest()) {
            let delta = mlp.local_sgd(&p.model, &p.shard.data, &config.sgd, round, p.sgd_seed)?;
            p.model.add_assign(&delta)?;
            records.push(ParticipantRecord::accuracy_only(p.id, mlp.evaluate(&p.model, test)?));
        }
        out.push(RoundMetrics {
            round: round + 1,
            records,
        });
    }
    Ok(out)
}

fn check_shared_start<T: Scalar>(mlp: &Mlp, participants: &[Participant<T>]) -> Result<ParameterVector<T>> {
    let first = participants
        .first()
        .ok_or_else(|| Error::InvalidConfig("no participants".into()))?;
    first.model.check_len(mlp.parameter_count())?;
    Ok(first.model.clone())
}

/// Data-size weights `n_j / sum(n)` in participant order.
fn data_weights<T: Scalar>(participants: &[Participant<T>]) -> Result<Vec<f64>> {
    let total: usize = participants.iter().map(|p| p.claimed_examples).sum();
    if total == 0 {
        return Err(Error::InvalidConfig("participants claim no examples".into()));
    }
    Ok(participants
        .iter()
        .map(|p| p.claimed_examples as f64 / total as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedAvgRoundOutcome<T> {
    pub metrics: RoundMetrics,
    /// Parameters each participant uploaded, in visiting order.
    pub uploads: Vec<(ParticipantId, ParameterVector<T>)>,
    pub weights: Vec<f64>,
    /// Global model after the end-of-round average.
    pub global: ParameterVector<T>,
}

/// Round-robin federated averaging.
pub struct FedAvgRun<'a, T> {
    mlp: &'a Mlp,
    config: ProtocolConfig,
    participants: Vec<Participant<T>>,
    global: ParameterVector<T>,
    weights: Vec<f64>,
    test: &'a Dataset<T>,
    round: usize,
}

impl<'a, T: Scalar> FedAvgRun<'a, T> {
    pub fn new(
        mlp: &'a Mlp,
        participants: Vec<Participant<T>>,
        config: ProtocolConfig,
        test: &'a Dataset<T>,
    ) -> Result<Self> {
        config.sgd.validate()?;
        let global = check_shared_start(mlp, &participants)?;
        let weights = data_weights(&participants)?;
        Ok(Self {
            mlp,
            config,
            participants,
            global,
            weights,
            test,
            round: 0,
        })
    }

    pub fn global(&self) -> &ParameterVector<T> {
        &self.global
    }

    pub fn step(&mut self) -> Result<FedAvgRoundOutcome<T>> {
        let round = self.round;
        let mut uploads = Vec::with_capacity(self.participants.len());
        let mut records = Vec::with_capacity(self.participants.len());
        for p in &mut self.participants {
            p.model = self.global.clone();
            match &p.behavior {
                Behavior::Honest => {
                    let delta = self
                        .mlp
                        .local_sgd(&p.model, &p.shard.data, &self.config.sgd, round, p.sgd_seed)?;
                    p.model.add_assign(&delta)?;
                }
                Behavior::FreeRider(adversary) => {
                    adversary.upload::<T>(round).add_to(&mut p.model)?;
                }
            }
            records.push(ParticipantRecord::accuracy_only(p.id, self.mlp.evaluate(&p.model, self.test)?));
            uploads.push((p.id, p.model.clone()));
        }
        let mut next = ParameterVector::zeros(self.global.len());
        for ((_, model), &w) in uploads.iter().zip(&self.weights) {
            next.add_scaled(T::from_f64_lossy(w), model)?;
        }
        self.global = next;
        self.round += 1;
        Ok(FedAvgRoundOutcome {
            metrics: RoundMetrics {
                round: self.round,
                records,
            },
            uploads,
            weights: self.weights.clone(),
            global: self.global.clone(),
        })
    }
}

pub fn run_fedavg<T: Scalar>(
    mlp: &Mlp,
    participants: Vec<Participant<T>>,
    config: &ProtocolConfig,
    test: &Dataset<T>,
) -> Result<Vec<RoundMetrics>> {
    let mut run = FedAvgRun::new(mlp, participants, config.clone(), test)?;
    (0..config.rounds).map(|_| run.step().map(|o| o.metrics)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DssgdRoundOutcome {
    pub metrics: RoundMetrics,
    /// Number of entries each participant uploaded, in visiting order.
    pub upload_sizes: Vec<(ParticipantId, usize)>,
}

/// Round-robin distributed selective SGD against a sequential parameter
/// server.
pub struct DssgdRun<'a, T> {
    mlp: &'a Mlp,
    config: ProtocolConfig,
    participants: Vec<Participant<T>>,
    global: ParameterVector<T>,
    /// Upload counter value at which each global entry last changed.
    stamps: Vec<u64>,
    uploads_applied: u64,
    test: &'a Dataset<T>,
    round: usize,
}

impl<'a, T: Scalar> DssgdRun<'a, T> {
    pub fn new(
        mlp: &'a Mlp,
        participants: Vec<Participant<T>>,
        config: ProtocolConfig,
        test: &'a Dataset<T>,
    ) -> Result<Self> {
        config.validate()?;
        let global = check_shared_start(mlp, &participants)?;
        Ok(Self {
            mlp,
            stamps: vec![0; global.len()],
            config,
            participants,
            global,
            uploads_applied: 0,
            test,
            round: 0,
        })
    }

    pub fn global(&self) -> &ParameterVector<T> {
        &self.global
    }

    /// Indices of the `download_rate` fraction of most recently updated
    /// global entries (ties to the lower index).
    fn download_indices(&self) -> Vec<usize> {
        let k = upload_count(self.config.download_rate, self.global.len());
        let mut order: Vec<usize> = (0..self.global.len()).collect();
        order.sort_by_key(|&i| (Reverse(self.stamps[i]), i));
        order.truncate(k);
        order
    }

    pub fn step(&mut self) -> Result<DssgdRoundOutcome> {
        let round = self.round;
        let bound = T::from_f64_lossy(self.config.sgd.clip_bound);
        let mut records = Vec::with_capacity(self.participants.len());
        let mut upload_sizes = Vec::with_capacity(self.participants.len());
        for idx in 0..self.participants.len() {
            if self.config.download_rate == 1.0 {
                self.participants[idx].model = self.global.clone();
            } else {
                let indices = self.download_indices();
                let model = &mut self.participants[idx].model;
                for i in indices {
                    model[i] = self.global[i];
                }
            }
            let p = &mut self.participants[idx];
            let upload = match &p.behavior {
                Behavior::Honest => {
                    let delta = self
                        .mlp
                        .local_sgd(&p.model, &p.shard.data, &self.config.sgd, round, p.sgd_seed)?;
                    p.model.add_assign(&delta)?;
                    sparsify(&clip(&delta, bound), self.config.upload_rate)?
                }
                Behavior::FreeRider(adversary) => adversary.upload(round),
            };
            records.push(ParticipantRecord::accuracy_only(p.id, self.mlp.evaluate(&p.model, self.test)?));
            upload_sizes.push((p.id, upload.len()));

            self.uploads_applied += 1;
            upload.add_to(&mut self.global)?;
            for i in upload.indices() {
                self.stamps[i] = self.uploads_applied;
            }
        }
        self.round += 1;
        Ok(DssgdRoundOutcome {
            metrics: RoundMetrics {
                round: self.round,
                records,
            },
            upload_sizes,
        })
    }
}

pub fn run_dssgd<T: Scalar>(
    mlp: &Mlp,
    participants: Vec<Participant<T>>,
    config: &ProtocolConfig,
    test: &Dataset<T>,
) -> Result<Vec<RoundMetrics>> {
    let mut run = DssgdRun::new(mlp, participants, config.clone(), test)?;
    (0..config.rounds).map(|_| run.step().map(|o| o.metrics)).collect()
}
