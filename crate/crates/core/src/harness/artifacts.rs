use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Framework;
use crate::error::{Error, Result};
use crate::protocols::{ParticipantRecord, RoundMetrics};
use crate::ParticipantId;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const METRICS_HEADER: [&str; 7] = [
    "round",
    "participant",
    "validation_accuracy",
    "test_accuracy",
    "reputation",
    "allocation_count",
    "evicted",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eviction {
    pub participant: ParticipantId,
    pub round: usize,
}

/// Contents of `summary.json` for one (framework, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub framework: Framework,
    pub seed: u64,
    /// Pearson coefficient of Standalone against this run's final
    /// accuracies; `None` when it is undefined, with the reason in
    /// `fairness_error`.
    pub fairness: Option<f64>,
    pub fairness_error: Option<String>,
    pub max_accuracy: f64,
    pub final_accuracies: BTreeMap<ParticipantId, f64>,
    pub standalone_final_accuracies: BTreeMap<ParticipantId, f64>,
    pub evictions: Vec<Eviction>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        for r in &m.records {
            w.write_record([
                m.round.to_string(),
                r.participant.to_string(),
                opt(r.validation_accuracy),
                r.test_accuracy.to_string(),
                opt(r.reputation),
                opt(r.allocation_count),
                r.evicted.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Format(format!("line {line}: bad {name} value {raw:?}")))
}

fn opt_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<Option<T>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        field(raw, name, line).map(Some)
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    if !path.is_file() {
        return Err(Error::MissingMetrics(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let mut out: Vec<RoundMetrics> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != METRICS_HEADER.len() {
            return Err(Error::Format(format!("line {line}: expected 7 fields")));
        }
        let round: usize = field(&row[0], "round", line)?;
        let record = ParticipantRecord {
            participant: field(&row[1], "participant", line)?,
            validation_accuracy: opt_field(&row[2], "validation_accuracy", line)?,
            test_accuracy: field(&row[3], "test_accuracy", line)?,
            reputation: opt_field(&row[4], "reputation", line)?,
            allocation_count: opt_field(&row[5], "allocation_count", line)?,
            evicted: field(&row[6], "evicted", line)?,
        };
        match out.last_mut() {
            Some(m) if m.round == round => m.records.push(record),
            _ => out.push(RoundMetrics {
                round,
                records: vec![record],
            }),
        }
    }
    Ok(out)
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// Writes `series_<participant>.csv` with columns `round,test_accuracy` for
/// every participant in `run_dir/metrics.csv`, into `out_dir` (the run
/// directory itself when `None`). Returns the written paths in participant
/// order.
pub fn emit_plot_data(run_dir: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let metrics = read_metrics_csv(&run_dir.join(METRICS_FILE))?;
    if metrics.is_empty() {
        return Err(Error::MissingMetrics(run_dir.join(METRICS_FILE)));
    }
    let out_dir = out_dir.unwrap_or(run_dir);
    fs::create_dir_all(out_dir)?;
    let mut series: BTreeMap<ParticipantId, Vec<(usize, f64)>> = BTreeMap::new();
    for m in &metrics {
        for r in &m.records {
            series.entry(r.participant).or_default().push((m.round, r.test_accuracy));
        }
    }
    let mut paths = Vec::with_capacity(series.len());
    for (id, points) in series {
        let path = out_dir.join(format!("series_{id}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["round", "test_accuracy"])?;
        for (round, acc) in points {
            w.write_record([round.to_string(), acc.to_string()])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
