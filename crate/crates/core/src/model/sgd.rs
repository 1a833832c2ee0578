use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub decay_gamma: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub clip_bound: f64,
}

impl Default for SgdConfig {
    /// MNIST imbalanced-size settings for five participants.
    fn default() -> Self {
        Self {
            learning_rate: 0.15,
            decay_gamma: 0.977,
            batch_size: 16,
            local_epochs: 2,
            clip_bound: 0.01,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return bad("decay_gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be positive");
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return bad("clip_bound must be positive");
        }
        Ok(())
    }

    /// Learning rate used during communication round `round` (zero based).
    pub fn learning_rate_at(&self, round: usize) -> f64 {
        self.learning_rate * self.decay_gamma.powi(round as i32)
    }
}
