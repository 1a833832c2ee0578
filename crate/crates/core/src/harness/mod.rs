//! Config-driven experiment runner: data preparation, framework runs,
//! fairness scoring and on-disk artifacts.

mod artifacts;
mod config;
mod fairness;
mod runner;

pub use artifacts::{
    emit_plot_data, read_metrics_csv, read_summary, write_metrics_csv, write_summary, RunSummary, Eviction,
    METRICS_FILE, SUMMARY_FILE,
};
pub use config::{DatasetSource, ExperimentConfig, Framework, Scenario};
pub use fairness::{fairness, fairness_report, rank_correlation, FairnessReport};
pub use runner::{
    final_accuracies, prepare, run_experiment, run_framework, run_dir, summarize, Prepared, RunRecord,
};
