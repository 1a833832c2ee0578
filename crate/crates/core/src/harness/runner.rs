use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::artifacts::{write_metrics_csv, write_summary, Eviction, RunSummary, METRICS_FILE, SUMMARY_FILE};
use super::config::{DatasetSource, ExperimentConfig, Framework};
use super::fairness::fairness;
use crate::data::{gaussian_blobs, load_adult, load_mnist, partition, split_validation, PartitionPlan, Shard, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Dataset, Mlp, ModelArchitecture};
use crate::protocols::{
    make_free_rider, run_cffl, run_dssgd, run_fedavg, run_standalone, Participant, ProtocolConfig, RoundMetrics,
};
use crate::rng::{derive_seed, Purpose};
use crate::scalar::Scalar;
use crate::ParticipantId;

/// Everything a framework run needs, built once per seed so that every
/// framework sees identical shards and initial models.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub mlp: Mlp,
    pub participants: Vec<Participant<T>>,
    pub validation: Dataset<T>,
    pub test: Dataset<T>,
}

/// One finished (framework, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub framework: Framework,
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

fn load_pool<T: Scalar>(source: &DatasetSource, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    match source {
        DatasetSource::Mnist { path } => load_mnist(path),
        DatasetSource::Adult { path, options } => {
            load_adult(path, &options.clone().unwrap_or_default(), derive_seed(seed, Purpose::Split, &[]))
        }
        DatasetSource::Synthetic { spec, test_examples } => {
            let data_seed = derive_seed(seed, Purpose::Synthetic, &[]);
            let test_spec = SyntheticSpec {
                examples: *test_examples,
                ..spec.clone()
            };
            Ok((gaussian_blobs(spec, data_seed, 0)?, gaussian_blobs(&test_spec, data_seed, 1)?))
        }
    }
}

/// Loads the data, holds out the server's validation set, partitions the
/// rest and builds honest participants followed by the configured free
/// riders. Free riders hold no data and claim the mean honest shard size
/// and class count.
pub fn prepare<T: Scalar>(config: &ExperimentConfig, seed: u64) -> Result<Prepared<T>> {
    config.validate()?;
    let (pool, test) = load_pool::<T>(&config.dataset, seed)?;
    let (pool, validation) = split_validation(
        &pool,
        config.validation_fraction,
        derive_seed(seed, Purpose::Validation, &[]),
    )?;
    let plan = PartitionPlan {
        scheme: config.partition_scheme(),
        participant_count: config.participants,
        total_examples: config.total_examples,
    };
    let shards = partition(&pool, &plan, derive_seed(seed, Purpose::Partition, &[]))?;

    let mut layers = vec![pool.feature_width()];
    layers.extend(&config.hidden_layers);
    layers.push(pool.class_count());
    let mlp = Mlp::new(ModelArchitecture::new(layers, config.activation)?)?;
    let initial = mlp.init_parameters::<T>(derive_seed(seed, Purpose::Init, &[]));

    let mut participants: Vec<Participant<T>> = shards
        .into_iter()
        .map(|shard| {
            let sgd_seed = derive_seed(seed, Purpose::Sgd, &[shard.owner as u64]);
            Participant::honest(shard, initial.clone(), sgd_seed)
        })
        .collect();

    let honest = participants.len();
    let mean = |f: fn(&Participant<T>) -> usize| {
        let total: usize = participants.iter().map(f).sum();
        (total as f64 / honest as f64).round() as usize
    };
    let claimed_examples = mean(|p| p.claimed_examples);
    let claimed_classes = mean(|p| p.claimed_classes);
    for k in 0..config.free_riders {
        let id = honest + k;
        let adversary = make_free_rider(
            mlp.parameter_count(),
            derive_seed(seed, Purpose::Adversary, &[id as u64]),
        )
        .with_upload_rate(config.protocol.upload_rate)?
        .with_bound(config.protocol.sgd.clip_bound);
        let shard = Shard {
            owner: id,
            data: Dataset::empty(pool.feature_width(), pool.class_count()),
            source_rows: Vec::new(),
        };
        participants.push(Participant::free_rider(
            shard,
            initial.clone(),
            adversary,
            claimed_examples,
            claimed_classes,
        ));
    }
    Ok(Prepared {
        mlp,
        participants,
        validation,
        test,
    })
}

pub fn run_framework<T: Scalar>(
    prepared: &Prepared<T>,
    framework: Framework,
    protocol: &ProtocolConfig,
) -> Result<Vec<RoundMetrics>> {
    let Prepared {
        mlp,
        participants,
        validation,
        test,
    } = prepared;
    let participants = participants.clone();
    match framework {
        Framework::Standalone => run_standalone(mlp, participants, protocol, test),
        Framework::Cffl => run_cffl(mlp, participants, protocol, validation, test),
        Framework::FedAvg => run_fedavg(mlp, participants, protocol, test),
        Framework::Dssgd => run_dssgd(mlp, participants, protocol, test),
    }
}

/// Test accuracy of every participant in the last round.
pub fn final_accuracies(metrics: &[RoundMetrics]) -> BTreeMap<ParticipantId, f64> {
    metrics
        .last()
        .map(|m| m.records.iter().map(|r| (r.participant, r.test_accuracy)).collect())
        .unwrap_or_default()
}

fn evictions(metrics: &[RoundMetrics]) -> Vec<Eviction> {
    let mut seen = BTreeMap::new();
    for m in metrics {
        for r in m.records.iter().filter(|r| r.evicted) {
            seen.entry(r.participant).or_insert(m.round);
        }
    }
    let mut out: Vec<Eviction> = seen
        .into_iter()
        .map(|(participant, round)| Eviction { participant, round })
        .collect();
    out.sort_by_key(|e| (e.round, e.participant));
    out
}

/// Scores a run against the Standalone run of the same seed. Fairness pairs
/// up participants present in both runs (free riders have no Standalone
/// accuracy).
pub fn summarize(
    framework: Framework,
    seed: u64,
    metrics: &[RoundMetrics],
    standalone: &[RoundMetrics],
) -> Result<RunSummary> {
    let finals = final_accuracies(metrics);
    let standalone_finals = final_accuracies(standalone);
    let max_accuracy = finals
        .values()
        .copied()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or_else(|| Error::InvalidConfig("run has no rounds".into()))?;
    let (x, y): (Vec<f64>, Vec<f64>) = standalone_finals
        .iter()
        .filter_map(|(id, &sacc)| finals.get(id).map(|&acc| (sacc, acc)))
        .unzip();
    let (fairness, fairness_error) = match fairness(&x, &y) {
        Ok(r) => (Some(r), None),
        Err(e @ (Error::DegenerateInput(_) | Error::DimensionMismatch { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(RunSummary {
        framework,
        seed,
        fairness,
        fairness_error,
        max_accuracy,
        final_accuracies: finals,
        standalone_final_accuracies: standalone_finals,
        evictions: evictions(metrics),
    })
}

pub fn run_dir(out: &Path, framework: Framework, seed: u64) -> PathBuf {
    out.join(framework.name()).join(format!("seed_{seed}"))
}

fn persist(out: &Path, framework: Framework, seed: u64, metrics: &[RoundMetrics], summary: RunSummary) -> Result<RunRecord> {
    let dir = run_dir(out, framework, seed);
    fs::create_dir_all(&dir)?;
    write_metrics_csv(&dir.join(METRICS_FILE), metrics)?;
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunRecord {
        framework,
        seed,
        dir,
        summary,
    })
}

/// Runs every configured framework for every seed and writes one run
/// directory per pair under `config.output_dir`, plus `config.toml` at its
/// root. Standalone runs first for each seed; its directory is always
/// written because the other summaries are scored against it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    config.save(&out.join("config.toml"))?;
    let mut records = Vec::new();
    for &seed in &config.seeds {
        let prepared = prepare::<crate::Real>(config, seed)?;
        let standalone = run_framework(&prepared, Framework::Standalone, &config.protocol)?;
        let summary = summarize(Framework::Standalone, seed, &standalone, &standalone)?;
        records.push(persist(out, Framework::Standalone, seed, &standalone, summary)?);
        for &framework in config.frameworks.iter().filter(|&&f| f != Framework::Standalone) {
            let metrics = run_framework(&prepared, framework, &config.protocol)?;
            let summary = summarize(framework, seed, &metrics, &standalone)?;
            records.push(persist(out, framework, seed, &metrics, summary)?);
        }
    }
    Ok(records)
}
