//! Binary detection metrics. The positive class is always H1 (harmful
//! overlap).

use std::fmt;

use radfed_signal::{ClientDataset, Frame, Label};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::stack_frames;
use crate::{ModelError, PartitionedModel};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("recall of {0:?} is undefined: no samples of that class")]
    UndefinedRecall(Label),
    #[error("no samples to evaluate")]
    Empty,
    #[error("cross-domain evaluation needs {0}")]
    CrossDomain(String),
    #[error("table parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::H1, Label::H1) => self.true_pos += 1,
            (Label::H1, Label::H0) => self.false_pos += 1,
            (Label::H0, Label::H0) => self.true_neg += 1,
            (Label::H0, Label::H1) => self.false_neg += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = Self::default();
        for (p, a) in pairs {
            cm.record(p, a);
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            true_neg: self.true_neg + other.true_neg,
            false_neg: self.false_neg + other.false_neg,
        }
    }

    /// TP / (TP + FN).
    pub fn recall_h1(&self) -> Result<f64, MetricsError> {
        ratio(self.true_pos, self.true_pos + self.false_neg).ok_or(MetricsError::UndefinedRecall(Label::H1))
    }

    /// TN / (TN + FP).
    pub fn recall_h0(&self) -> Result<f64, MetricsError> {
        ratio(self.true_neg, self.true_neg + self.false_pos).ok_or(MetricsError::UndefinedRecall(Label::H0))
    }

    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        ratio(self.true_pos + self.true_neg, self.total()).ok_or(MetricsError::Empty)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn recall(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    cm.recall_h1()
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    cm.accuracy()
}

/// Metrics of one model on one set of frames. Per-class recalls are `None`
/// when the class does not occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub recall_h0: Option<f64>,
    pub recall_h1: Option<f64>,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self, MetricsError> {
        Ok(Self {
            confusion,
            accuracy: confusion.accuracy()?,
            recall_h0: confusion.recall_h0().ok(),
            recall_h1: confusion.recall_h1().ok(),
        })
    }
}

/// Predicted class per frame: H1 only when its logit is strictly larger.
pub fn predict(model: &PartitionedModel, frames: &[&Frame]) -> Result<Vec<Label>, MetricsError> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(EVAL_BATCH) {
        let z = model.logits(stack_frames(chunk)?)?;
        out.extend(z.data().chunks(2).map(|r| if r[1] > r[0] { Label::H1 } else { Label::H0 }));
    }
    Ok(out)
}

pub fn confusion_of(model: &PartitionedModel, frames: &[&Frame]) -> Result<ConfusionMatrix, MetricsError> {
    let predicted = predict(model, frames)?;
    Ok(ConfusionMatrix::from_pairs(predicted.into_iter().zip(frames.iter().map(|f| f.label))))
}

pub fn evaluate_model(model: &PartitionedModel, frames: &[Frame]) -> Result<Evaluation, MetricsError> {
    if frames.is_empty() {
        return Err(MetricsError::Empty);
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    Evaluation::from_confusion(confusion_of(model, &refs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub accuracy: f64,
    pub recall_h1: f64,
}

/// `cells[i][j]`: model trained on client `j`, tested on client `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainMatrix {
    pub esc_ids: Vec<u32>,
    pub cells: Vec<Vec<CellMetrics>>,
}

impl CrossDomainMatrix {
    pub fn size(&self) -> usize {
        self.esc_ids.len()
    }

    pub fn diagonal_mean_accuracy(&self) -> f64 {
        let k = self.size();
        (0..k).map(|i| self.cells[i][i].accuracy).sum::<f64>() / k as f64
    }

    pub fn off_diagonal_mean_accuracy(&self) -> f64 {
        let k = self.size();
        let mut sum = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    sum += self.cells[i][j].accuracy;
                }
            }
        }
        sum / (k * (k - 1)) as f64
    }

    pub fn mean_accuracy(&self) -> f64 {
        let k = self.size();
        self.cells.iter().flatten().map(|c| c.accuracy).sum::<f64>() / (k * k) as f64
    }

    /// One row per test client; columns `train_<id>_acc`, `train_<id>_recall_h1`.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["test_esc".to_string()];
        for id in &self.esc_ids {
            header.push(format!("train_{id}_acc"));
            header.push(format!("train_{id}_recall_h1"));
        }
        w.write_record(&header)?;
        for (id, row) in self.esc_ids.iter().zip(&self.cells) {
            let mut rec = vec![id.to_string()];
            for c in row {
                rec.push(c.accuracy.to_string());
                rec.push(c.recall_h1.to_string());
            }
            w.write_record(&rec)?;
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, MetricsError> {
    let bytes = w.into_inner().map_err(|e| MetricsError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| MetricsError::Parse(e.to_string()))
}

pub fn cross_domain_eval(
    local_models: &[PartitionedModel],
    clients: &[ClientDataset],
) -> Result<CrossDomainMatrix, MetricsError> {
    if clients.len() < 2 {
        return Err(MetricsError::CrossDomain(format!("at least 2 clients, got {}", clients.len())));
    }
    if local_models.len() != clients.len() {
        return Err(MetricsError::CrossDomain(format!(
            "one model per client ({} models, {} clients)",
            local_models.len(),
            clients.len()
        )));
    }
    let mut cells = Vec::with_capacity(clients.len());
    for test in clients {
        let mut row = Vec::with_capacity(local_models.len());
        for model in local_models {
            let e = evaluate_model(model, &test.test)?;
            row.push(CellMetrics {
                accuracy: e.accuracy,
                recall_h1: e.recall_h1.ok_or(MetricsError::UndefinedRecall(Label::H1))?,
            });
        }
        cells.push(row);
    }
    Ok(CrossDomainMatrix { esc_ids: clients.iter().map(|c| c.esc_id).collect(), cells })
}

/// Per-paradigm outcome fed into the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSummary {
    pub paradigm: String,
    pub rounds: usize,
    /// Accuracy on the global test set.
    pub accuracy: f64,
    pub recall_h1: f64,
    pub per_client_recall_h0: Vec<f64>,
    pub per_client_recall_h1: Vec<f64>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

impl ParadigmSummary {
    pub fn worst_client_recall_h1(&self) -> f64 {
        self.per_client_recall_h1.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub summary: ParadigmSummary,
    pub worst_client_recall_h1: f64,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

const TABLE_HEADER: [&str; 10] = [
    "paradigm",
    "rounds",
    "accuracy",
    "recall_h1",
    "worst_client_recall_h1",
    "uplink_bytes",
    "downlink_bytes",
    "total_bytes",
    "per_client_recall_h0",
    "per_client_recall_h1",
];

/// Rows sorted by paradigm name, then by round count.
pub fn compare_paradigms(reports: &[ParadigmSummary]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|s| ComparisonRow {
            worst_client_recall_h1: s.worst_client_recall_h1(),
            total_bytes: s.uplink_bytes + s.downlink_bytes,
            summary: s.clone(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.summary
            .paradigm
            .cmp(&b.summary.paradigm)
            .then(a.summary.rounds.cmp(&b.summary.rounds))
    });
    ComparisonTable { rows }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn split_floats(s: &str) -> Result<Vec<f64>, MetricsError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|v| parse(v)).collect()
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, MetricsError>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| MetricsError::Parse(format!("{s:?}: {e}")))
}

impl ComparisonTable {
    /// Floats are written in shortest round-trip form, so parsing the output
    /// reproduces the table exactly.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            let s = &r.summary;
            w.write_record([
                s.paradigm.clone(),
                s.rounds.to_string(),
                s.accuracy.to_string(),
                s.recall_h1.to_string(),
                r.worst_client_recall_h1.to_string(),
                s.uplink_bytes.to_string(),
                s.downlink_bytes.to_string(),
                r.total_bytes.to_string(),
                join(&s.per_client_recall_h0),
                join(&s.per_client_recall_h1),
            ])?;
        }
        finish(w)
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != TABLE_HEADER {
            return Err(MetricsError::Parse(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            rows.push(ComparisonRow {
                summary: ParadigmSummary {
                    paradigm: f(0).to_string(),
                    rounds: parse(f(1))?,
                    accuracy: parse(f(2))?,
                    recall_h1: parse(f(3))?,
                    uplink_bytes: parse(f(5))?,
                    downlink_bytes: parse(f(6))?,
                    per_client_recall_h0: split_floats(f(8))?,
                    per_client_recall_h1: split_floats(f(9))?,
                },
                worst_client_recall_h1: parse(f(4))?,
                total_bytes: parse(f(7))?,
            });
        }
        Ok(Self { rows })
    }
}
