//! UCI Adult census loader.
//!
//! Categorical columns are one-hot encoded over the categories seen in the
//! file (sorted, `?` kept as its own category). Numeric columns are min-max
//! scaled with statistics from the training side only.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::split::stratified_split;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

/// Records kept per income class after balancing.
pub const ADULT_EXAMPLES_PER_CLASS: usize = 11_687;

const COLUMNS: usize = 15;
const LABEL_COLUMN: usize = 14;
const NUMERIC: [usize; 6] = [0, 2, 4, 10, 11, 12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdultOptions {
    pub per_class: usize,
    pub train_fraction: f64,
}

impl Default for AdultOptions {
    fn default() -> Self {
        Self {
            per_class: ADULT_EXAMPLES_PER_CLASS,
            train_fraction: 0.8,
        }
    }
}

struct Record {
    fields: Vec<String>,
    label: usize,
}

fn parse_label(raw: &str, line: usize) -> Result<usize> {
    match raw.trim_end_matches('.') {
        "<=50K" => Ok(0),
        ">50K" => Ok(1),
        other => Err(Error::Format(format!("line {line}: unknown income label {other:?}"))),
    }
}

fn read_records<R: Read>(reader: R) -> Result<Vec<Record>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'|'))
        .from_reader(reader);
    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = i + 1;
        if row.len() != COLUMNS {
            return Err(Error::Format(format!(
                "line {line}: expected {COLUMNS} columns, found {}",
                row.len()
            )));
        }
        for &c in &NUMERIC {
            row[c].parse::<f64>().map_err(|_| {
                Error::Format(format!("line {line}: column {c} is not numeric: {:?}", &row[c]))
            })?;
        }
        records.push(Record {
            label: parse_label(&row[LABEL_COLUMN], line)?,
            fields: row.iter().map(str::to_string).collect(),
        });
    }
    Ok(records)
}

/// Parses, balances, encodes and splits Adult records from any reader.
pub fn parse_adult<T: Scalar, R: Read>(
    reader: R,
    opts: &AdultOptions,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let records = read_records(reader)?;

    let mut kept = Vec::with_capacity(2 * opts.per_class);
    for class in 0..2 {
        let mut rows: Vec<usize> = (0..records.len())
            .filter(|&r| records[r].label == class)
            .collect();
        if rows.len() < opts.per_class {
            return Err(Error::InsufficientClassExamples {
                class,
                available: rows.len(),
                required: opts.per_class,
            });
        }
        rows.shuffle(&mut stream(seed, Purpose::Balance, &[class as u64]));
        kept.extend_from_slice(&rows[..opts.per_class]);
    }
    kept.sort_unstable();

    let categorical: Vec<usize> = (0..LABEL_COLUMN).filter(|c| !NUMERIC.contains(c)).collect();
    let vocab: Vec<Vec<String>> = categorical
        .iter()
        .map(|&c| {
            kept.iter()
                .map(|&r| records[r].fields[c].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let width = NUMERIC.len() + vocab.iter().map(Vec::len).sum::<usize>();

    // Raw numeric values first, then one-hot blocks; numeric columns are
    // rescaled after the split.
    let mut x = Array2::<f64>::zeros((kept.len(), width));
    for (i, &r) in kept.iter().enumerate() {
        let fields = &records[r].fields;
        for (k, &c) in NUMERIC.iter().enumerate() {
            x[[i, k]] = fields[c].parse().expect("validated while reading");
        }
        let mut offset = NUMERIC.len();
        for (k, &c) in categorical.iter().enumerate() {
            let pos = vocab[k]
                .binary_search(&fields[c])
                .expect("vocabulary built from the same rows");
            x[[i, offset + pos]] = 1.0;
            offset += vocab[k].len();
        }
    }
    let labels = kept.iter().map(|&r| records[r].label).collect();
    let all = Dataset::new(x, labels, 2)?;
    let (train, test) = stratified_split(&all, opts.train_fraction, seed)?;

    let mut bounds = Vec::with_capacity(NUMERIC.len());
    for k in 0..NUMERIC.len() {
        let col = train.features().column(k);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        bounds.push((lo, hi));
    }
    let scale = |d: &Dataset<f64>| -> Result<Dataset<T>> {
        let x = Array2::from_shape_fn(d.features().dim(), |(i, k)| {
            let v = d.features()[[i, k]];
            let v = match bounds.get(k) {
                Some(&(lo, hi)) if hi > lo => (v - lo) / (hi - lo),
                Some(_) => 0.0,
                None => v,
            };
            T::from_f64_lossy(v)
        });
        Dataset::new(x, d.labels().to_vec(), 2)
    };
    Ok((scale(&train)?, scale(&test)?))
}

pub fn load_adult<T: Scalar>(
    path: &Path,
    opts: &AdultOptions,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    parse_adult(File::open(path)?, opts, seed)
}
