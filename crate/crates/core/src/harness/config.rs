use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AdultOptions, PartitionScheme, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Activation, SgdConfig};
use crate::protocols::ProtocolConfig;
use crate::reputation::ThresholdRule;
use crate::update::WeightingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Standalone,
    Cffl,
    FedAvg,
    Dssgd,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::Standalone => "standalone",
            Framework::Cffl => "cffl",
            Framework::FedAvg => "fedavg",
            Framework::Dssgd => "dssgd",
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standalone" => Ok(Framework::Standalone),
            "cffl" => Ok(Framework::Cffl),
            "fedavg" => Ok(Framework::FedAvg),
            "dssgd" => Ok(Framework::Dssgd),
            other => Err(Error::InvalidConfig(format!("unknown framework {other:?}"))),
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Directory holding the four IDX files.
    Mnist { path: PathBuf },
    /// Single UCI Adult CSV.
    Adult {
        path: PathBuf,
        #[serde(default)]
        options: Option<AdultOptions>,
    },
    Synthetic {
        #[serde(flatten)]
        spec: SyntheticSpec,
        test_examples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Power-law shard sizes.
    ImbalancedSize,
    /// Equal shard sizes, linearly increasing class coverage.
    ImbalancedClass,
    /// Equal random shards.
    Uniform,
}

/// One experiment: a dataset, a partition, a set of frameworks and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub scenario: Scenario,
    pub participants: usize,
    pub total_examples: usize,
    #[serde(default = "default_exponent")]
    pub power_law_exponent: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub frameworks: Vec<Framework>,
    /// Extra participants that upload noise; appended after the honest ones.
    #[serde(default)]
    pub free_riders: usize,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub protocol: ProtocolConfig,
}

fn default_exponent() -> f64 {
    1.0
}

fn default_validation_fraction() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// MNIST with power-law shard sizes: two hidden layers of 128 and 64
    /// units, `E = 2`, `B = 16`, `lr = 0.15` for five participants and 0.25
    /// otherwise, 30 rounds, threshold `1/(3|R|)`.
    pub fn mnist_imbalanced_size(path: impl Into<PathBuf>, participants: usize) -> Self {
        let learning_rate = if participants <= 5 { 0.15 } else { 0.25 };
        Self {
            dataset: DatasetSource::Mnist { path: path.into() },
            scenario: Scenario::ImbalancedSize,
            participants,
            total_examples: 600 * participants,
            power_law_exponent: 1.0,
            validation_fraction: 0.1,
            hidden_layers: vec![128, 64],
            activation: Activation::Relu,
            frameworks: vec![Framework::Cffl, Framework::FedAvg, Framework::Dssgd],
            free_riders: 0,
            output_dir: PathBuf::from("runs"),
            seeds: vec![1],
            protocol: ProtocolConfig {
                rounds: 30,
                upload_rate: 0.1,
                download_rate: 1.0,
                pretrain_epochs: 5,
                clip_local_update: false,
                weighting: WeightingMode::DataSize,
                sgd: SgdConfig {
                    learning_rate,
                    decay_gamma: 0.977,
                    batch_size: 16,
                    local_epochs: 2,
                    clip_bound: 0.01,
                },
                threshold: ThresholdRule::PerMember { factor: 1.0 / 3.0 },
                alpha: 5.0,
            },
        }
    }

    /// MNIST with linspace class coverage: `E = 1`, `lr = 0.15`, 50 rounds,
    /// threshold `1/(6|R|)`.
    pub fn mnist_imbalanced_class(path: impl Into<PathBuf>, participants: usize) -> Self {
        let mut cfg = Self::mnist_imbalanced_size(path, participants);
        cfg.scenario = Scenario::ImbalancedClass;
        cfg.protocol.rounds = 50;
        cfg.protocol.weighting = WeightingMode::ClassNumber;
        cfg.protocol.sgd.learning_rate = 0.15;
        cfg.protocol.sgd.local_epochs = 1;
        cfg.protocol.threshold = ThresholdRule::PerMember { factor: 1.0 / 6.0 };
        cfg
    }

    /// Adult with power-law shard sizes: one hidden layer of 32 units,
    /// `lr = 0.03`, 4000/8000/12000 examples for 5/10/20 participants.
    pub fn adult_imbalanced_size(path: impl Into<PathBuf>, participants: usize) -> Self {
        let mut cfg = Self::mnist_imbalanced_size(PathBuf::new(), participants);
        cfg.dataset = DatasetSource::Adult {
            path: path.into(),
            options: None,
        };
        cfg.total_examples = match participants {
            0..=5 => 4000,
            6..=10 => 8000,
            _ => 12000,
        };
        cfg.hidden_layers = vec![32];
        cfg.protocol.sgd.learning_rate = 0.03;
        cfg
    }

    pub fn partition_scheme(&self) -> PartitionScheme {
        match self.scenario {
            Scenario::ImbalancedSize => PartitionScheme::PowerLawSize {
                exponent: self.power_law_exponent,
            },
            Scenario::ImbalancedClass => PartitionScheme::LinspaceClass,
            Scenario::Uniform => PartitionScheme::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.participants == 0 {
            return Err(Error::InvalidConfig("participants must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig("validation_fraction must lie in (0, 1)".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}
