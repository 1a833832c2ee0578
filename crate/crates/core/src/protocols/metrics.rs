use serde::{Deserialize, Serialize};

use crate::ParticipantId;

/// One participant's state at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant: ParticipantId,
    /// Server-side validation accuracy of the participant's upload (fair
    /// protocol only).
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub reputation: Option<f64>,
    pub allocation_count: Option<usize>,
    pub evicted: bool,
}

impl ParticipantRecord {
    pub fn accuracy_only(participant: ParticipantId, test_accuracy: f64) -> Self {
        Self {
            participant,
            validation_accuracy: None,
            test_accuracy,
            reputation: None,
            allocation_count: None,
            evicted: false,
        }
    }
}

/// Per-participant records for one communication round (rounds count from 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub records: Vec<ParticipantRecord>,
}

impl RoundMetrics {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn record(&self, participant: ParticipantId) -> Option<&ParticipantRecord> {
        self.records.iter().find(|r| r.participant == participant)
    }
}
