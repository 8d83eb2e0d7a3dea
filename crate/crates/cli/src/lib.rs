//! Experiment driver behind the `radfed` binary. Every command reads one
//! TOML config and writes only under its output directory.

pub mod commands;
pub mod config;

pub use commands::{cross_test, gen_data, planned_counts, report, score, train, train_on};
pub use config::{ExperimentConfig, OutputConfig};

/// Sizes the global rayon pool. Call once, before any command.
pub fn init_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}
