//! Simulator for reputation-mediated collaborative fair federated learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: flat-parameter MLPs, mini-batch SGD, accuracy evaluation.
//! - [`data`]: MNIST/Adult/synthetic loaders, splits and partition schemes.
//! - [`update`]: clipping, largest-values sparsification, aggregation and
//!   allocation of sparse updates.
//! - [`reputation`]: validation-driven reputations, eviction and download
//!   budgets.
//! - [`protocols`]: the fair protocol and the Standalone, FedAvg and DSSGD
//!   baselines, plus the free-rider adversary.
//! - [`harness`]: experiment configuration, fairness metric, run artifacts.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision the harness uses.

pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod protocols;
pub mod reputation;
pub mod rng;
pub mod scalar;
pub mod update;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

/// Participants are numbered `0..P` in shard order.
pub type ParticipantId = usize;

/// Precision used by the experiment harness.
pub type Real = f64;

pub type ParameterVector = model::ParameterVector<Real>;
pub type Dataset = model::Dataset<Real>;
pub type SparseUpdate = update::SparseUpdate<Real>;
pub type Shard = data::Shard<Real>;
pub type ServerModels = reputation::ServerModels<Real>;


pub type ParameterVector32 = model::ParameterVector<f32>;
pub type Dataset32 = model::Dataset<f32>;
pub type SparseUpdate32 = update::SparseUpdate<f32>;
