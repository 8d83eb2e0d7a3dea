//! Local-only, centralized, FedAvg and FedPer training.

mod client;
pub mod message;
mod report;
mod runner;
mod server;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;
use crate::model::{count_parameters, PartitionedModel, Share};
use crate::ModelError;

pub use client::{client_local_update, ClientState};
pub use message::{Message, MessageKind};
pub use report::{rounds_from_csv, rounds_to_csv, RoundReport};
pub use runner::{
    pool_clients, run_centralized, run_federated, run_federated_observed, run_local_only, setup_clients,
    setup_server,
};
pub use server::{gammas_from_sizes, server_aggregate, ServerState};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error("client {0} has an empty training split")]
    EmptyTrainSplit(u32),
    #[error("aggregation weights sum to {0}, not 1")]
    GammaSum(f64),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("message: {0}")]
    Message(String),
    #[error("privacy violation: {0}")]
    Privacy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Autodiff(#[from] radfed_autodiff::AutodiffError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    LocalOnly,
    Centralized,
    FedAvg,
    FedPer,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [Paradigm::LocalOnly, Paradigm::Centralized, Paradigm::FedAvg, Paradigm::FedPer];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::LocalOnly => "local-only",
            Paradigm::Centralized => "centralized",
            Paradigm::FedAvg => "fed-avg",
            Paradigm::FedPer => "fed-per",
        }
    }

    /// Parameters exchanged with the server, if any.
    pub fn shared(self) -> Option<Share> {
        match self {
            Paradigm::FedAvg => Some(Share::Full),
            Paradigm::FedPer => Some(Share::Base),
            _ => None,
        }
    }

    pub fn is_federated(self) -> bool {
        self.shared().is_some()
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = FedError;

    fn from_str(s: &str) -> Result<Self, FedError> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        match norm.as_str() {
            "local-only" | "local" => Ok(Paradigm::LocalOnly),
            "centralized" => Ok(Paradigm::Centralized),
            "fed-avg" | "fedavg" => Ok(Paradigm::FedAvg),
            "fed-per" | "fedper" => Ok(Paradigm::FedPer),
            _ => Err(FedError::Config(format!("unknown paradigm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub paradigm: Paradigm,
    /// Communication rounds T (for non-federated paradigms, training
    /// rounds of `local_epochs` epochs each).
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once the pooled validation H1 recall exceeds this (federated
    /// paradigms only).
    pub target_recall: f64,
    pub bytes_per_param: usize,
    /// Fraction of clients sampled each round.
    pub participation: f64,
    pub seed: u64,
    /// Wall-clock time makes reports non-reproducible, so it is off by
    /// default.
    pub record_wall_time: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::FedPer,
            rounds: 150,
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 1e-3,
            target_recall: 0.99,
            bytes_per_param: 4,
            participation: 1.0,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(FedError::Config("rounds, local_epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(FedError::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(FedError::Config(format!("participation {} is not in (0, 1]", self.participation)));
        }
        message::check_precision(self.bytes_per_param)
    }
}

/// Bytes sent per client per round as `(uplink, downlink)`.
pub fn payload_bytes(model: &PartitionedModel, paradigm: Paradigm, bytes_per_param: usize) -> (u64, u64) {
    let counts = count_parameters(model);
    let shared = match paradigm.shared() {
        Some(Share::Full) => counts.total,
        Some(Share::Base) => counts.base,
        Some(Share::Head) => counts.head,
        None => return (0, 0),
    };
    let bytes = message::message_bytes(shared, bytes_per_param) as u64;
    (bytes, bytes)
}
