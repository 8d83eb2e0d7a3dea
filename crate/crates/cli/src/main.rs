use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use radfed_cli::{commands, init_workers, ExperimentConfig};

#[derive(Parser)]
#[command(name = "radfed", version, about = "Federated radar/commercial overlap detection experiments")]
struct Cli {
    /// Worker threads for frame rendering and client updates.
    #[arg(long, global = true, env = "RADFED_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the dataset master seed (gen-data) or training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the client datasets and write shards plus a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Full-size dataset: 500 frames per subcategory and client.
        #[arg(long)]
        paper_scale: bool,
        /// Print the frame counts the config implies without rendering.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train the configured paradigm on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Overrides `training.paradigm`.
        #[arg(long)]
        paradigm: Option<String>,
    },
    /// Train one local model per client and score it on every client.
    CrossTest {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Merge train runs into a comparison table and per-round series.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    init_workers(cli.workers)?;
    match cli.command {
        Command::GenData { common, paper_scale, dry_run } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(s) = common.seed {
                cfg.dataset.master_seed = s;
            }
            if paper_scale {
                cfg.apply_full_scale();
            }
            if dry_run {
                let counts = commands::planned_counts(&cfg)?;
                let total: usize = counts.iter().map(|c| c.train + c.val + c.test).sum();
                println!("{total} frames planned");
                return Ok(());
            }
            let outcome = commands::gen_data(&cfg, &out)?;
            print!("{}", outcome.table());
            println!("{} frames written to {}", outcome.total(), out.display());
        }
        Command::Train { common, data, paradigm } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(s) = common.seed {
                cfg.training.seed = s;
            }
            if let Some(p) = paradigm {
                cfg.training.paradigm = p.parse()?;
            }
            let outcome = commands::train(&cfg, &data, &out)?;
            let s = &outcome.summary;
            println!(
                "{}: {} rounds, target {} {}, test acc {:.4}, recall_h1 {:.4}, worst client recall_h1 {:.4}",
                s.paradigm,
                s.rounds_run,
                s.target_recall,
                if s.reached_target { "reached" } else { "not reached" },
                s.result.accuracy,
                s.result.recall_h1,
                s.result.worst_client_recall_h1()
            );
        }
        Command::CrossTest { common, data } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(s) = common.seed {
                cfg.training.seed = s;
            }
            let s = commands::cross_test(&cfg, &data, &out)?;
            println!(
                "diagonal mean accuracy {:.4}, off-diagonal {:.4}, overall {:.4}",
                s.diagonal_mean_accuracy, s.off_diagonal_mean_accuracy, s.mean_accuracy
            );
        }
        Command::Report { out, runs } => {
            let r = commands::report(&runs, &out).context("building report")?;
            print!("{}", r.table.to_csv()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
