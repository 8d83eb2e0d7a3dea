use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use radfed_cli::commands::{self, TrainSummary, SUMMARY_FILE};
use radfed_cli::ExperimentConfig;
use radfed_core::fed::{rounds_from_csv, Paradigm};
use radfed_signal::read_manifest;
use tempfile::TempDir;

const TINY: &str = r#"
[dataset]
clients = 2
frames_per_subcat = 10
mixtures = [[1.0, 0.0], [0.0, 1.0]]
comm_power_offsets_db = [0.0, 1.0]
master_seed = 5

[dataset.channel.render]
height = 16
width = 16

[model]
input_size = [16, 16]
stem_channels = 4
block_channels = [4, 8, 8, 8]
head_hidden = 8

[training]
rounds = 2
batch_size = 16
target_recall = 1.5

[output]
checkpoints = true
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

/// One generated dataset shared by every test.
fn dataset() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        commands::gen_data(&tiny(), dir.path()).unwrap();
        dir
    })
    .path()
}

fn train(paradigm: Paradigm, out: &Path) -> commands::TrainOutcome {
    let mut cfg = tiny();
    cfg.training.paradigm = paradigm;
    commands::train(&cfg, dataset(), out).unwrap()
}

#[test]
fn config_defaults_and_round_trip() {
    let d = ExperimentConfig::default();
    assert_eq!(d.dataset.clients, 5);
    assert_eq!(d.training.rounds, 150);
    assert_eq!(d.training.local_epochs, 1);
    assert_eq!(d.training.learning_rate, 1e-3);
    assert_eq!(d.training.target_recall, 0.99);
    assert_eq!(d.dataset.sinr_db.0, 20.0);
    assert_eq!(ExperimentConfig::from_toml("").unwrap(), d);
    let cfg = tiny();
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    assert!(ExperimentConfig::from_toml("[training]\nroundz = 3\n").is_err());
    assert!(ExperimentConfig::from_toml("[training]\nrounds = 0\n").is_err());
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.dataset.total_frames(), 2_250);
    assert_eq!(cfg.model.input_size, (cfg.dataset.channel.render.height, cfg.dataset.channel.render.width));
}

#[test]
fn counts_match_config() {
    let mut cfg = ExperimentConfig::default();
    let total = |c: &ExperimentConfig| commands::planned_counts(c).unwrap().iter().map(|r| r.train + r.val + r.test).sum::<usize>();
    assert_eq!(total(&cfg), 2_250);
    cfg.apply_full_scale();
    assert_eq!(total(&cfg), 22_500);
    let m = read_manifest(dataset()).unwrap();
    assert_eq!(m.total_frames, 2 * 9 * 10);
}

#[test]
fn regeneration_is_bit_identical() {
    let again = TempDir::new().unwrap();
    commands::gen_data(&tiny(), again.path()).unwrap();
    for entry in fs::read_dir(dataset()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(dataset().join(&name)).unwrap(), fs::read(again.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn fedper_single_round_writes_one_row() {
    let out = TempDir::new().unwrap();
    let mut cfg = tiny();
    cfg.training.paradigm = Paradigm::FedPer;
    cfg.training.rounds = 1;
    let outcome = commands::train(&cfg, dataset(), out.path()).unwrap();
    let rounds = rounds_from_csv(&fs::read_to_string(out.path().join("rounds.csv")).unwrap()).unwrap();
    assert_eq!(rounds.len(), 1);
    assert_eq!(rounds, outcome.reports);
    assert!(out.path().join("checkpoints/esc_0.ckpt").exists());
    assert!(out.path().join("checkpoints/esc_1.ckpt").exists());
    let summary: TrainSummary = serde_json::from_str(&fs::read_to_string(out.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.config.training, cfg.training);
    assert_eq!(summary.config.model, cfg.model);
    assert_eq!(summary.config.dataset, read_manifest(dataset()).unwrap().config);
    assert!(!summary.reached_target);
    let written = ExperimentConfig::load(&out.path().join("config.toml")).unwrap();
    assert_eq!(written, summary.config);
}

#[test]
fn rerun_gives_identical_summary() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    train(Paradigm::FedAvg, a.path());
    train(Paradigm::FedAvg, b.path());
    for f in ["summary.json", "rounds.csv", "config.toml", "checkpoints/esc_1.ckpt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn input_size_mismatch_is_reported_before_training() {
    let out = TempDir::new().unwrap();
    let mut cfg = tiny();
    cfg.model.input_size = (32, 32);
    let err = commands::train(&cfg, dataset(), out.path()).err().unwrap();
    assert!(err.to_string().contains("16x16"), "{err}");
    assert!(!out.path().join("rounds.csv").exists());
}

#[test]
fn cross_test_labels_and_shape() {
    let out = TempDir::new().unwrap();
    let s = commands::cross_test(&tiny(), dataset(), out.path()).unwrap();
    assert_eq!(s.esc_ids, vec![0, 1]);
    assert_eq!(s.matrix.cells.len(), 2);
    let csv = fs::read_to_string(out.path().join("cross_domain.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "test_esc,train_0_acc,train_0_recall_h1,train_1_acc,train_1_recall_h1");
    assert!(lines.next().unwrap().starts_with("0,"));
    assert!(lines.next().unwrap().starts_with("1,"));
}

#[test]
fn report_merges_runs() {
    let (avg, per, rep) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let a = train(Paradigm::FedAvg, avg.path());
    let p = train(Paradigm::FedPer, per.path());
    let r = commands::report(&[avg.path().to_path_buf(), per.path().to_path_buf()], rep.path()).unwrap();
    assert_eq!(r.table.rows.len(), 2);
    assert_eq!(r.series[0].1, a.reports);
    assert_eq!(r.series[1].1, p.reports);
    let back = rounds_from_csv(&fs::read_to_string(&r.series[1].0).unwrap()).unwrap();
    assert_eq!(back, p.reports);

    // Per round, FedPer uplinks exactly K head payloads fewer bytes.
    let head = a.summary.parameters.head as u64;
    let k = a.summary.esc_ids.len() as u64;
    for (x, y) in a.reports.iter().zip(&p.reports) {
        assert_eq!(x.uplink_bytes - y.uplink_bytes, head * 4 * k);
        assert_eq!(x.downlink_bytes - y.downlink_bytes, head * 4 * k);
    }

    let single = TempDir::new().unwrap();
    let s = commands::report(&[per.path().to_path_buf()], single.path()).unwrap();
    assert_eq!(s.table.rows[0].summary, p.summary.result);
}

#[test]
fn report_refuses_other_schema_versions() {
    let run = TempDir::new().unwrap();
    train(Paradigm::LocalOnly, run.path());
    let path = run.path().join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    fs::write(&path, text).unwrap();
    let out = TempDir::new().unwrap();
    let err = commands::report(&[run.path().to_path_buf()], out.path()).err().unwrap();
    assert!(err.to_string().contains("schema version"), "{err}");
}

#[test]
fn binary_end_to_end() {
    let work = TempDir::new().unwrap();
    let cfg_path = work.path().join("tiny.toml");
    fs::write(&cfg_path, TINY).unwrap();
    let bin = env!("CARGO_BIN_EXE_radfed");
    let run = |args: &[&str]| {
        let o = Command::new(bin).args(args).env("RADFED_WORKERS", "1").output().unwrap();
        (o.status.success(), String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    let data = work.path().join("data");
    let (ok, stdout, _) = run(&["gen-data", "--config", cfg_path.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(ok);
    assert!(stdout.contains("180 frames written"), "{stdout}");
    let out = work.path().join("run");
    let (ok, stdout, _) = run(&[
        "train", "--config", cfg_path.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--paradigm", "local-only", "--seed", "3",
    ]);
    assert!(ok);
    assert!(stdout.contains("local-only: 2 rounds"), "{stdout}");
    let rep = work.path().join("report");
    let (ok, stdout, _) = run(&["report", "--out", rep.to_str().unwrap(), out.to_str().unwrap()]);
    assert!(ok);
    assert!(stdout.starts_with("paradigm,rounds"));
    let (ok, _, stderr) = run(&["train", "--data", work.path().join("missing").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!ok);
    assert!(stderr.starts_with("error:"), "{stderr}");
}
