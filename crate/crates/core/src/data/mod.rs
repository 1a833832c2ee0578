//! Dataset ingestion, splitting and heterogeneous partitioning.

mod adult;
mod idx;
mod partition;
mod split;
mod synthetic;

pub use adult::{load_adult, parse_adult, AdultOptions, ADULT_EXAMPLES_PER_CLASS};
pub use idx::{load_mnist, read_idx_images, read_idx_labels, MNIST_FILES};
pub use partition::{
    linspace_class_counts, partition, power_law_sizes, PartitionPlan, PartitionScheme, Shard,
};
pub use split::{split_validation, stratified_split};
pub use synthetic::{gaussian_blobs, SyntheticSpec};
