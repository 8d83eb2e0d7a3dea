use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use radfed_core::fed::{
    pool_clients, rounds_from_csv, rounds_to_csv, run_centralized, run_federated, run_local_only, setup_clients,
    setup_server, Paradigm, RoundReport,
};
use radfed_core::metrics::{
    compare_paradigms, confusion_of, cross_domain_eval, ComparisonTable, ConfusionMatrix,
    CrossDomainMatrix, ParadigmSummary,
};
use radfed_core::{count_parameters, PartitionedModel, ParameterCounts};
use radfed_signal::{
    build_client_datasets, load_dataset, plan_client_datasets, read_manifest, save_dataset, FederatedDataset, Frame,
    Manifest,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Version of `summary.json`, `cross_summary.json` and `comparison.json`.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.toml";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CROSS_FILE: &str = "cross_domain.csv";
pub const CROSS_SUMMARY_FILE: &str = "cross_summary.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub esc_id: u32,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataOutcome {
    pub manifest: Manifest,
    pub counts: Vec<CountRow>,
}

impl GenDataOutcome {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.train + c.val + c.test).sum()
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:>5} {:>7} {:>7} {:>7} {:>7}\n", "esc", "train", "val", "test", "total");
        for c in &self.counts {
            out += &format!("{:>5} {:>7} {:>7} {:>7} {:>7}\n", c.esc_id, c.train, c.val, c.test, c.train + c.val + c.test);
        }
        let sum = |f: fn(&CountRow) -> usize| self.counts.iter().map(f).sum::<usize>();
        out += &format!(
            "{:>5} {:>7} {:>7} {:>7} {:>7}\n",
            "all",
            sum(|c| c.train),
            sum(|c| c.val),
            sum(|c| c.test),
            self.total()
        );
        out
    }
}

/// Frame counts the config implies, without rendering anything.
pub fn planned_counts(cfg: &ExperimentConfig) -> Result<Vec<CountRow>> {
    Ok(plan_client_datasets(&cfg.dataset)?
        .iter()
        .map(|p| CountRow { esc_id: p.esc_id, train: p.train.len(), val: p.val.len(), test: p.test.len() })
        .collect())
}

pub fn gen_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<GenDataOutcome> {
    cfg.dataset.validate()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    info!("rendering {} frames", cfg.dataset.total_frames());
    let data = build_client_datasets(&cfg.dataset).context("generating dataset")?;
    let manifest = save_dataset(&data, out_dir).context("writing dataset")?;
    fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let counts = manifest
        .clients
        .iter()
        .map(|s| CountRow { esc_id: s.esc_id.unwrap_or(u32::MAX), train: s.train, val: s.val, test: s.test })
        .collect();
    Ok(GenDataOutcome { manifest, counts })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loads the dataset and checks it against the model before any training.
fn open_dataset(cfg: &ExperimentConfig, dataset_dir: &Path) -> Result<(FederatedDataset, String)> {
    let manifest = read_manifest(dataset_dir).with_context(|| format!("reading manifest in {}", dataset_dir.display()))?;
    let render = &manifest.config.channel.render;
    if (render.height, render.width) != cfg.model.input_size {
        bail!(
            "dataset frames are {}x{} but the model expects {}x{}",
            render.height,
            render.width,
            cfg.model.input_size.0,
            cfg.model.input_size.1
        );
    }
    if render.channels != cfg.model.input_channels {
        bail!("dataset frames have {} channels but the model expects {}", render.channels, cfg.model.input_channels);
    }
    let data = load_dataset(dataset_dir).context("loading dataset")?;
    let digest = sha256_file(&dataset_dir.join(radfed_signal::store::MANIFEST_FILE))?;
    Ok((data, digest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub paradigm: Paradigm,
    pub esc_ids: Vec<u32>,
    pub parameters: ParameterCounts,
    pub rounds_run: usize,
    pub target_recall: f64,
    /// Whether the pooled validation H1 recall exceeded the target.
    pub reached_target: bool,
    /// Test metrics: each client's model on its own test split, pooled for
    /// the headline numbers.
    pub result: ParadigmSummary,
    pub final_round: Option<RoundReport>,
    pub dataset_manifest_sha256: String,
    pub config: ExperimentConfig,
}

/// Deployed model per client (the same model repeated for centralized).
pub fn score(
    paradigm: Paradigm,
    models: &[&PartitionedModel],
    data: &FederatedDataset,
    reports: &[RoundReport],
) -> Result<ParadigmSummary> {
    let mut pooled = ConfusionMatrix::default();
    let (mut rec0, mut rec1) = (Vec::new(), Vec::new());
    for (m, c) in models.iter().zip(&data.clients) {
        let refs: Vec<&Frame> = c.test.iter().collect();
        let cm = confusion_of(m, &refs)?;
        pooled = pooled.merge(&cm);
        rec0.push(cm.recall_h0().unwrap_or(f64::NAN));
        rec1.push(cm.recall_h1().unwrap_or(f64::NAN));
    }
    Ok(ParadigmSummary {
        paradigm: paradigm.to_string(),
        rounds: reports.len(),
        accuracy: pooled.accuracy()?,
        recall_h1: pooled.recall_h1()?,
        per_client_recall_h0: rec0,
        per_client_recall_h1: rec1,
        uplink_bytes: reports.iter().map(|r| r.uplink_bytes).sum(),
        downlink_bytes: reports.iter().map(|r| r.downlink_bytes).sum(),
    })
}

pub struct TrainOutcome {
    pub summary: TrainSummary,
    pub reports: Vec<RoundReport>,
    pub models: Vec<PartitionedModel>,
}

/// Trains the configured paradigm on every client of `data`.
pub fn train_on(cfg: &ExperimentConfig, data: &FederatedDataset) -> Result<(Vec<PartitionedModel>, Vec<RoundReport>)> {
    let t = &cfg.training;
    Ok(match t.paradigm {
        Paradigm::Centralized => {
            let pooled = pool_clients(&data.clients);
            let (m, r) = run_centralized(&pooled, &data.clients, &cfg.model, t)?;
            (vec![m], r)
        }
        Paradigm::LocalOnly => {
            let mut clients = setup_clients(&data.clients, &cfg.model, t)?;
            let r = run_local_only(&mut clients, t)?;
            (clients.into_iter().map(|c| c.model).collect(), r)
        }
        Paradigm::FedAvg | Paradigm::FedPer => {
            let mut clients = setup_clients(&data.clients, &cfg.model, t)?;
            let mut server = setup_server(&clients, t)?;
            let r = run_federated(&mut clients, &mut server, t)?;
            (clients.into_iter().map(|c| c.model).collect(), r)
        }
    })
}

pub fn train(cfg: &ExperimentConfig, dataset_dir: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.model.validate()?;
    cfg.training.validate()?;
    let (data, digest) = open_dataset(cfg, dataset_dir)?;
    let mut effective = cfg.clone();
    effective.dataset = data.config.clone();
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join(CONFIG_FILE), effective.to_toml()?)?;

    info!("training {} for up to {} rounds", cfg.training.paradigm, cfg.training.rounds);
    let (models, reports) = train_on(&effective, &data)?;
    let esc_ids: Vec<u32> = data.clients.iter().map(|c| c.esc_id).collect();
    let deployed: Vec<&PartitionedModel> =
        if models.len() == 1 { vec![&models[0]; data.clients.len()] } else { models.iter().collect() };
    let result = score(cfg.training.paradigm, &deployed, &data, &reports)?;

    fs::write(out_dir.join(ROUNDS_FILE), rounds_to_csv(&reports, &esc_ids)?)?;
    if cfg.output.checkpoints {
        let dir = out_dir.join("checkpoints");
        fs::create_dir_all(&dir)?;
        if models.len() == 1 {
            models[0].save_checkpoint(BufWriter::new(File::create(dir.join("model.ckpt"))?))?;
        } else {
            for (m, id) in models.iter().zip(&esc_ids) {
                m.save_checkpoint(BufWriter::new(File::create(dir.join(format!("esc_{id}.ckpt")))?))?;
            }
        }
    }
    let final_round = reports.last().cloned();
    let summary = TrainSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        paradigm: cfg.training.paradigm,
        esc_ids,
        parameters: count_parameters(&models[0]),
        rounds_run: reports.len(),
        target_recall: cfg.training.target_recall,
        reached_target: final_round
            .as_ref()
            .and_then(|r| r.global_val_recall_h1)
            .is_some_and(|r| r > cfg.training.target_recall),
        result,
        final_round,
        dataset_manifest_sha256: digest,
        config: effective,
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(TrainOutcome { summary, reports, models })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSummary {
    pub schema_version: u32,
    pub esc_ids: Vec<u32>,
    pub diagonal_mean_accuracy: f64,
    pub off_diagonal_mean_accuracy: f64,
    pub mean_accuracy: f64,
    pub matrix: CrossDomainMatrix,
    pub dataset_manifest_sha256: String,
    pub config: ExperimentConfig,
}

/// Trains one local model per client and scores each on every client's
/// test split.
pub fn cross_test(cfg: &ExperimentConfig, dataset_dir: &Path, out_dir: &Path) -> Result<CrossSummary> {
    let mut effective = cfg.clone();
    effective.training.paradigm = Paradigm::LocalOnly;
    effective.model.validate()?;
    effective.training.validate()?;
    let (data, digest) = open_dataset(&effective, dataset_dir)?;
    effective.dataset = data.config.clone();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(CONFIG_FILE), effective.to_toml()?)?;
    let (models, _) = train_on(&effective, &data)?;
    let matrix = cross_domain_eval(&models, &data.clients)?;
    fs::write(out_dir.join(CROSS_FILE), matrix.to_csv()?)?;
    let summary = CrossSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        esc_ids: matrix.esc_ids.clone(),
        diagonal_mean_accuracy: matrix.diagonal_mean_accuracy(),
        off_diagonal_mean_accuracy: matrix.off_diagonal_mean_accuracy(),
        mean_accuracy: matrix.mean_accuracy(),
        matrix,
        dataset_manifest_sha256: digest,
        config: effective,
    };
    write_json(&out_dir.join(CROSS_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub paradigm: Paradigm,
    pub series_file: String,
    pub rounds_run: usize,
    pub reached_target: bool,
    pub worst_client_recall_h1: f64,
    pub total_bytes: u64,
    pub result: ParadigmSummary,
}

pub struct ReportOutcome {
    pub report: ComparisonReport,
    pub table: ComparisonTable,
    pub series: Vec<(PathBuf, Vec<RoundReport>)>,
}

fn read_summary(dir: &Path) -> Result<TrainSummary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(SUMMARY_SCHEMA_VERSION as u64) {
        bail!(
            "{} has schema version {:?}, this build reads version {SUMMARY_SCHEMA_VERSION}",
            path.display(),
            found
        );
    }
    Ok(serde_json::from_value(value)?)
}

/// Merges training runs into one comparison table plus one per-round
/// series file per run.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    if run_dirs.is_empty() {
        bail!("no run directories given");
    }
    let series_dir = out_dir.join("series");
    fs::create_dir_all(&series_dir)?;
    let (mut runs, mut summaries, mut series) = (Vec::new(), Vec::new(), Vec::new());
    for (i, dir) in run_dirs.iter().enumerate() {
        let s = read_summary(dir)?;
        let rounds_text = fs::read_to_string(dir.join(ROUNDS_FILE))
            .with_context(|| format!("reading {}", dir.join(ROUNDS_FILE).display()))?;
        let reports = rounds_from_csv(&rounds_text)?;
        let file = format!("{i:02}_{}.csv", s.paradigm);
        let path = series_dir.join(&file);
        fs::write(&path, rounds_to_csv(&reports, &s.esc_ids)?)?;
        runs.push(RunEntry {
            paradigm: s.paradigm,
            series_file: format!("series/{file}"),
            rounds_run: s.rounds_run,
            reached_target: s.reached_target,
            worst_client_recall_h1: s.result.worst_client_recall_h1(),
            total_bytes: s.result.uplink_bytes + s.result.downlink_bytes,
            result: s.result.clone(),
        });
        summaries.push(s.result);
        series.push((path, reports));
    }
    let table = compare_paradigms(&summaries);
    fs::write(out_dir.join(COMPARISON_CSV), table.to_csv()?)?;
    let report = ComparisonReport { schema_version: SUMMARY_SCHEMA_VERSION, runs };
    write_json(&out_dir.join(COMPARISON_JSON), &report)?;
    Ok(ReportOutcome { report, table, series })
}
