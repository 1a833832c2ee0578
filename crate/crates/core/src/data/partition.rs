use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;
use crate::ParticipantId;

/// How the training pool is split among participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Shard `j` (one based) gets a share proportional to `j^exponent`.
    PowerLawSize {
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    /// Equal shard sizes; shard `j` sees `floor(linspace(1, C, P))[j]` classes.
    LinspaceClass,
    Uniform,
}

fn default_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub scheme: PartitionScheme,
    pub participant_count: usize,
    pub total_examples: usize,
}

/// One participant's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard<T> {
    pub owner: ParticipantId,
    pub data: Dataset<T>,
    /// Row indices into the dataset the shard was cut from.
    pub source_rows: Vec<usize>,
}

impl<T: Scalar> Shard<T> {
    pub fn example_count(&self) -> usize {
        self.data.len()
    }

    pub fn class_count(&self) -> usize {
        self.data.present_classes().len()
    }
}

/// Rounds `total * w_i / sum(w)` to integers that add up to `total`.
///
/// Floors first, then hands the leftover units to the largest fractional
/// parts (ties to the lower index).
pub(crate) fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Shard sizes proportional to `j^exponent`, `j = 1..=participants`.
pub fn power_law_sizes(total: usize, participants: usize, exponent: f64) -> Result<Vec<usize>> {
    if participants == 0 {
        return Err(Error::InvalidConfig("participant_count must be positive".into()));
    }
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "power-law exponent must be positive, got {exponent}"
        )));
    }
    let weights: Vec<f64> = (1..=participants).map(|j| (j as f64).powf(exponent)).collect();
    let sizes = largest_remainder(total, &weights);
    if sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InfeasiblePlan(format!(
            "{total} examples cannot give {participants} strictly increasing shard sizes: {sizes:?}"
        )));
    }
    Ok(sizes)
}

/// `floor(linspace(1, classes, participants))`, computed in integers.
pub fn linspace_class_counts(classes: usize, participants: usize) -> Vec<usize> {
    match participants {
        0 => Vec::new(),
        1 => vec![1],
        p => (0..p)
            .map(|j| ((p - 1) + j * (classes - 1)) / (p - 1))
            .collect(),
    }
}

/// Cuts `plan.total_examples` rows of `train` into disjoint shards.
pub fn partition<T: Scalar>(
    train: &Dataset<T>,
    plan: &PartitionPlan,
    seed: u64,
) -> Result<Vec<Shard<T>>> {
    let p = plan.participant_count;
    if p == 0 {
        return Err(Error::InvalidConfig("participant_count must be positive".into()));
    }
    if plan.total_examples > train.len() {
        return Err(Error::InfeasiblePlan(format!(
            "{} examples requested from a pool of {}",
            plan.total_examples,
            train.len()
        )));
    }
    let rows_per_shard = match &plan.scheme {
        PartitionScheme::PowerLawSize { exponent } => {
            random_shards(train, power_law_sizes(plan.total_examples, p, *exponent)?, seed)
        }
        PartitionScheme::Uniform => {
            let sizes = largest_remainder(plan.total_examples, &vec![1.0; p]);
            random_shards(train, sizes, seed)
        }
        PartitionScheme::LinspaceClass => class_shards(train, plan, seed)?,
    };
    Ok(rows_per_shard
        .into_iter()
        .enumerate()
        .map(|(owner, rows)| Shard {
            owner,
            data: train.select(&rows),
            source_rows: rows,
        })
        .collect())
}

fn random_shards<T: Scalar>(train: &Dataset<T>, sizes: Vec<usize>, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream(seed, Purpose::Partition, &[]));
    let mut start = 0;
    sizes
        .into_iter()
        .map(|n| {
            let rows = order[start..start + n].to_vec();
            start += n;
            rows
        })
        .collect()
}

/// Class-restricted shards of equal size.
///
/// Shards are filled from the fewest classes to the most. Each picks the
/// classes with the most rows still unassigned (ties broken by a seeded
/// random priority) and splits its quota evenly across them.
fn class_shards<T: Scalar>(
    train: &Dataset<T>,
    plan: &PartitionPlan,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let p = plan.participant_count;
    let classes = train.class_count();
    if plan.total_examples % p != 0 {
        return Err(Error::InfeasiblePlan(format!(
            "{} examples do not split evenly over {p} participants",
            plan.total_examples
        )));
    }
    if train.present_classes().len() != classes {
        return Err(Error::InfeasiblePlan(
            "training pool does not cover every class".into(),
        ));
    }
    let per_shard = plan.total_examples / p;
    let class_counts = linspace_class_counts(classes, p);

    let mut rng = stream(seed, Purpose::Partition, &[]);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (r, &label) in train.labels().iter().enumerate() {
        pools[label].push(r);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let priority: Vec<u64> = (0..classes).map(|_| rng.random()).collect();

    let mut shards = vec![Vec::new(); p];
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by_key(|&j| (class_counts[j], j));
    for j in order {
        let k = class_counts[j];
        let mut candidates: Vec<usize> = (0..classes).collect();
        candidates.sort_by_key(|&c| (Reverse(pools[c].len()), priority[c]));
        let chosen = &candidates[..k];
        let quotas = largest_remainder(per_shard, &vec![1.0; k]);
        for (&class, &quota) in chosen.iter().zip(&quotas) {
            let pool = &mut pools[class];
            if pool.len() < quota {
                return Err(Error::InfeasiblePlan(format!(
                    "class {class} has {} unassigned rows, shard {j} needs {quota}",
                    pool.len()
                )));
            }
            let at = pool.len() - quota;
            shards[j].extend(pool.drain(at..));
        }
        shards[j].shuffle(&mut rng);
    }
    Ok(shards)
}
