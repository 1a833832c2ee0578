//! Round-by-round orchestration of the fair protocol and its baselines.
//!
//! Orchestrators are single-threaded state machines: each exposes a `step`
//! that runs one communication round and returns what happened, and a
//! `run_*` convenience function that drives all rounds and collects metrics.

mod adversary;
mod baselines;
mod cffl;
mod config;
mod metrics;
mod participant;

pub use adversary::{make_free_rider, FreeRider};
pub use baselines::{
    run_dssgd, run_fedavg, run_standalone, DssgdRoundOutcome, DssgdRun, FedAvgRoundOutcome, FedAvgRun,
};
pub use cffl::{run_cffl, CfflRoundOutcome, CfflRun};
pub use config::ProtocolConfig;
pub use metrics::{ParticipantRecord, RoundMetrics};
pub use participant::{Behavior, Participant};
