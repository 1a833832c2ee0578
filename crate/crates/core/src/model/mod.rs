//! Fully connected networks over flat parameter vectors, trained with
//! mini-batch SGD on softmax cross-entropy.

mod architecture;
mod dataset;
mod mlp;
mod params;
mod sgd;

pub use architecture::{Activation, LayerShape, ModelArchitecture};
pub use dataset::Dataset;
pub use mlp::Mlp;
pub(crate) use mlp::PRETRAIN_ROUND_KEY;
pub use params::ParameterVector;
pub use sgd::SgdConfig;
