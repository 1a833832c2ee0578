use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SgdConfig;
use crate::reputation::ThresholdRule;
use crate::update::{check_upload_rate, WeightingMode};

/// Knobs shared by every framework. Fields a framework does not use are
/// ignored by it (for example `upload_rate` in FedAvg and Standalone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub rounds: usize,
    pub upload_rate: f64,
    /// DSSGD only: fraction of most recently updated global parameters each
    /// participant downloads.
    #[serde(default = "one")]
    pub download_rate: f64,
    /// Local epochs before the first round; the fair protocol only.
    #[serde(default)]
    pub pretrain_epochs: usize,
    /// Fair protocol only: when set, a participant folds its clipped local
    /// update into its own model instead of the full one. Uploads are
    /// clipped either way.
    #[serde(default)]
    pub clip_local_update: bool,
    pub weighting: WeightingMode,
    pub sgd: SgdConfig,
    pub threshold: ThresholdRule,
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            upload_rate: 0.1,
            download_rate: 1.0,
            pretrain_epochs: 5,
            clip_local_update: false,
            weighting: WeightingMode::DataSize,
            sgd: SgdConfig::default(),
            threshold: ThresholdRule::PerMember { factor: 1.0 / 3.0 },
            alpha: 5.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        check_upload_rate(self.upload_rate)?;
        if !(self.download_rate > 0.0 && self.download_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "download rate must lie in (0, 1], got {}",
                self.download_rate
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        Ok(())
    }
}
