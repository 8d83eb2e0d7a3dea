use std::sync::OnceLock;

use proptest::prelude::*;
use radfed_core::fed::*;
use radfed_core::metrics::*;
use radfed_core::*;
use radfed_signal::{build_client_datasets, DatasetConfig, FederatedDataset, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model() -> ResidualCnnConfig {
    ResidualCnnConfig {
        input_size: (16, 16),
        stem_channels: 4,
        block_channels: vec![4, 8, 8, 8],
        head_hidden: 8,
        ..ResidualCnnConfig::default()
    }
}

fn data() -> &'static FederatedDataset {
    static DATA: OnceLock<FederatedDataset> = OnceLock::new();
    DATA.get_or_init(|| {
        let mut cfg = DatasetConfig {
            clients: 3,
            frames_per_subcat: 10,
            mixtures: vec![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]],
            comm_power_offsets_db: vec![0.0, 1.0, -1.0],
            master_seed: 17,
            ..DatasetConfig::default()
        };
        cfg.channel.render.height = 16;
        cfg.channel.render.width = 16;
        build_client_datasets(&cfg).unwrap()
    })
}

fn cm(tp: u64, fp: u64, tn: u64, fneg: u64) -> ConfusionMatrix {
    ConfusionMatrix { true_pos: tp, false_pos: fp, true_neg: tn, false_neg: fneg }
}

#[test]
fn recall_example() {
    let m = cm(99, 3, 97, 1);
    assert!((recall(&m).unwrap() - 0.99).abs() < 1e-15);
    assert!((accuracy(&m).unwrap() - 0.98).abs() < 1e-15);
}

#[test]
fn recall_undefined_without_positives() {
    let m = cm(0, 4, 6, 0);
    assert!(matches!(recall(&m), Err(MetricsError::UndefinedRecall(Label::H1))));
    assert!(m.recall_h0().is_ok());
    assert!(matches!(ConfusionMatrix::default().accuracy(), Err(MetricsError::Empty)));
}

#[test]
fn brute_force_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let n = rng.random_range(1..200);
        let pairs: Vec<(Label, Label)> = (0..n)
            .map(|_| (Label::from_class(rng.random_range(0..2)).unwrap(), Label::from_class(rng.random_range(0..2)).unwrap()))
            .collect();
        let m = ConfusionMatrix::from_pairs(pairs.iter().copied());
        let positives = pairs.iter().filter(|(_, a)| *a == Label::H1).count();
        let hits = pairs.iter().filter(|(p, a)| *a == Label::H1 && *p == Label::H1).count();
        let correct = pairs.iter().filter(|(p, a)| p == a).count();
        assert_eq!(m.total(), n as u64);
        assert_eq!(m.accuracy().unwrap(), correct as f64 / n as f64);
        match m.recall_h1() {
            Ok(r) => {
                assert_eq!(r, hits as f64 / positives as f64);
                assert_eq!((r * positives as f64).round() as u64, m.true_pos);
            }
            Err(_) => assert_eq!(positives, 0),
        }
    }
}

#[test]
fn constant_classifier() {
    let actual = [Label::H1, Label::H0, Label::H1, Label::H1, Label::H0];
    let all_h1 = ConfusionMatrix::from_pairs(actual.iter().map(|&a| (Label::H1, a)));
    assert_eq!(all_h1.recall_h1().unwrap(), 1.0);
    assert_eq!(all_h1.recall_h0().unwrap(), 0.0);
    assert_eq!(all_h1.accuracy().unwrap(), 0.6);
    let all_h0 = ConfusionMatrix::from_pairs(actual.iter().map(|&a| (Label::H0, a)));
    assert_eq!(all_h0.recall_h1().unwrap(), 0.0);
    assert_eq!(all_h0.recall_h0().unwrap(), 1.0);
}

proptest! {
    #[test]
    fn accuracy_is_prevalence_weighted_recall(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fneg in 0u64..1000) {
        let m = cm(tp, fp, tn, fneg);
        prop_assume!(tp + fneg > 0 && tn + fp > 0);
        let n = m.total() as f64;
        let p1 = (tp + fneg) as f64 / n;
        let p0 = (tn + fp) as f64 / n;
        let mixed = p1 * m.recall_h1().unwrap() + p0 * m.recall_h0().unwrap();
        prop_assert!((mixed - m.accuracy().unwrap()).abs() < 1e-12);
        prop_assert_eq!(m.merge(&ConfusionMatrix::default()), m);
    }
}

#[test]
fn evaluation_is_deterministic_and_counts_every_frame() {
    let d = data();
    let model = build_model(&tiny_model(), 3).unwrap();
    let a = evaluate_model(&model, &d.global_test).unwrap();
    let b = evaluate_model(&model, &d.global_test).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.confusion.total(), d.global_test.len() as u64);
    let positives = d.global_test.iter().filter(|f| f.label == Label::H1).count() as u64;
    assert_eq!(a.confusion.true_pos + a.confusion.false_neg, positives);
    assert!(matches!(evaluate_model(&model, &[]), Err(MetricsError::Empty)));
}

#[test]
fn cross_domain_diagonal_matches_direct_evaluation() {
    let d = data();
    let models: Vec<PartitionedModel> = (0..3).map(|s| build_model(&tiny_model(), s).unwrap()).collect();
    let m = cross_domain_eval(&models, &d.clients).unwrap();
    assert_eq!(m.size(), 3);
    assert!(m.cells.iter().all(|row| row.len() == 3));
    for i in 0..3 {
        let e = evaluate_model(&models[i], &d.clients[i].test).unwrap();
        assert_eq!(m.cells[i][i].accuracy, e.accuracy);
        assert_eq!(m.cells[i][i].recall_h1, e.recall_h1.unwrap());
    }
    let csv = m.to_csv().unwrap();
    assert!(csv.starts_with("test_esc,train_0_acc,train_0_recall_h1,train_1_acc"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn same_model_everywhere_gives_equal_columns() {
    let d = data();
    let model = build_model(&tiny_model(), 9).unwrap();
    let m = cross_domain_eval(&vec![model; 3], &d.clients).unwrap();
    for row in &m.cells {
        assert!(row.iter().all(|c| c == &row[0]));
    }
}

#[test]
fn cross_domain_needs_two_clients() {
    let d = data();
    let model = build_model(&tiny_model(), 0).unwrap();
    assert!(cross_domain_eval(&[model.clone()], &d.clients[..1]).is_err());
    assert!(cross_domain_eval(&[model], &d.clients).is_err());
}

fn summary(paradigm: Paradigm, rounds: usize, k: u64, model: &PartitionedModel) -> ParadigmSummary {
    let (up, down) = payload_bytes(model, paradigm, 4);
    ParadigmSummary {
        paradigm: paradigm.to_string(),
        rounds,
        accuracy: 0.1 + 0.7 / 3.0,
        recall_h1: 2.0 / 3.0,
        per_client_recall_h0: vec![0.9, 1.0 / 7.0],
        per_client_recall_h1: vec![0.25, 0.8, 0.5],
        uplink_bytes: up * rounds as u64 * k,
        downlink_bytes: down * rounds as u64 * k,
    }
}

#[test]
fn comparison_table() {
    let model = build_model(&ResidualCnnConfig::default(), 0).unwrap();
    let (rounds, k) = (7, 5);
    let rows: Vec<ParadigmSummary> =
        [Paradigm::FedPer, Paradigm::LocalOnly, Paradigm::FedAvg].iter().map(|&p| summary(p, rounds, k, &model)).collect();
    let table = compare_paradigms(&rows);
    let names: Vec<&str> = table.rows.iter().map(|r| r.summary.paradigm.as_str()).collect();
    assert_eq!(names, ["fed-avg", "fed-per", "local-only"]);
    assert_eq!(table.rows[2].total_bytes, 0);
    assert_eq!(table.rows[0].worst_client_recall_h1, 0.25);
    let head = count_parameters(&model).head as u64;
    assert_eq!(
        table.rows[0].summary.uplink_bytes - table.rows[1].summary.uplink_bytes,
        head * 4 * rounds as u64 * k
    );
    let back = ComparisonTable::from_csv(&table.to_csv().unwrap()).unwrap();
    assert_eq!(back, table);
    assert!(ComparisonTable::from_csv("a,b\n1,2\n").is_err());
}
