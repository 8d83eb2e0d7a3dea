//! Residual CNN with a base/head split, federated training paradigms and
//! detection metrics for radar-overlap spectrograms.

mod batch;
mod error;
pub mod fed;
pub mod metrics;
pub mod model;

pub use batch::{labels, stack_frames};
pub use error::ModelError;
pub use model::{
    build_model, count_parameters, LayoutEntry, ParameterCounts, PartitionedModel, ResidualCnnConfig, Share,
    WeightVector,
};
