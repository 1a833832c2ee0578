use crate::data::Shard;
use crate::model::ParameterVector;
use crate::scalar::Scalar;
use crate::ParticipantId;

use super::FreeRider;

#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    Honest,
    /// Uploads generated noise instead of training on its shard.
    FreeRider(FreeRider),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant<T> {
    pub id: ParticipantId,
    pub model: ParameterVector<T>,
    pub shard: Shard<T>,
    pub behavior: Behavior,
    /// Seed of this participant's mini-batch shuffles.
    pub sgd_seed: u64,
    /// Example count the server weights this participant by.
    pub claimed_examples: usize,
    /// Class count the server weights this participant by.
    pub claimed_classes: usize,
}

impl<T: Scalar> Participant<T> {
    /// Honest participant whose claims are its shard's true statistics.
    pub fn honest(shard: Shard<T>, model: ParameterVector<T>, sgd_seed: u64) -> Self {
        Self {
            id: shard.owner,
            model,
            claimed_examples: shard.example_count(),
            claimed_classes: shard.class_count(),
            shard,
            behavior: Behavior::Honest,
            sgd_seed,
        }
    }

    pub fn free_rider(
        shard: Shard<T>,
        model: ParameterVector<T>,
        adversary: FreeRider,
        claimed_examples: usize,
        claimed_classes: usize,
    ) -> Self {
        Self {
            id: shard.owner,
            model,
            shard,
            behavior: Behavior::FreeRider(adversary),
            sgd_seed: 0,
            claimed_examples,
            claimed_classes,
        }
    }

    pub fn is_honest(&self) -> bool {
        matches!(self.behavior, Behavior::Honest)
    }
}
