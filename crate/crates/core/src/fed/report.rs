use serde::{Deserialize, Serialize};

use super::FedError;

/// Metrics after one round's aggregation. Per-class recalls are `None`
/// when the class is absent from a validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub per_client_val_accuracy: Vec<f64>,
    pub per_client_recall_h0: Vec<Option<f64>>,
    pub per_client_recall_h1: Vec<Option<f64>>,
    /// Over the union of every client's validation split, each client
    /// scored by the model it would deploy.
    pub global_val_accuracy: f64,
    pub global_val_recall_h1: Option<f64>,
    pub train_loss: f64,
    /// Summed over participating clients.
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str) -> Result<f64, FedError> {
    s.parse().map_err(|_| FedError::Config(format!("bad number {s:?} in round series")))
}

fn parse_opt(s: &str) -> Result<Option<f64>, FedError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn parse_u64(s: &str) -> Result<u64, FedError> {
    s.parse().map_err(|_| FedError::Config(format!("bad integer {s:?} in round series")))
}

/// Per-round series with cumulative byte totals. Floats use shortest
/// round-trip formatting, so [`rounds_from_csv`] is exact.
pub fn rounds_to_csv(reports: &[RoundReport], esc_ids: &[u32]) -> Result<String, FedError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "round",
        "global_val_accuracy",
        "global_val_recall_h1",
        "train_loss",
        "uplink_bytes",
        "downlink_bytes",
        "cumulative_bytes",
        "wall_time_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for id in esc_ids {
        header.push(format!("esc{id}_val_accuracy"));
        header.push(format!("esc{id}_recall_h0"));
        header.push(format!("esc{id}_recall_h1"));
    }
    w.write_record(&header)?;
    let mut cumulative = 0u64;
    for r in reports {
        if r.per_client_val_accuracy.len() != esc_ids.len() {
            return Err(FedError::Config("report client count differs from the id list".into()));
        }
        cumulative += r.uplink_bytes + r.downlink_bytes;
        let mut rec = vec![
            r.round.to_string(),
            r.global_val_accuracy.to_string(),
            opt(r.global_val_recall_h1),
            r.train_loss.to_string(),
            r.uplink_bytes.to_string(),
            r.downlink_bytes.to_string(),
            cumulative.to_string(),
            opt(r.wall_time_s),
        ];
        for k in 0..esc_ids.len() {
            rec.push(r.per_client_val_accuracy[k].to_string());
            rec.push(opt(r.per_client_recall_h0[k]));
            rec.push(opt(r.per_client_recall_h1[k]));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| FedError::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FedError::Config(e.to_string()))
}

pub fn rounds_from_csv(text: &str) -> Result<Vec<RoundReport>, FedError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let width = rd.headers()?.len();
    if width < 8 || (width - 8) % 3 != 0 {
        return Err(FedError::Config(format!("round series has {width} columns")));
    }
    let k = (width - 8) / 3;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let mut r = RoundReport {
            round: parse_u64(f(0))? as usize,
            global_val_accuracy: parse_f64(f(1))?,
            global_val_recall_h1: parse_opt(f(2))?,
            train_loss: parse_f64(f(3))?,
            uplink_bytes: parse_u64(f(4))?,
            downlink_bytes: parse_u64(f(5))?,
            wall_time_s: parse_opt(f(7))?,
            per_client_val_accuracy: Vec::with_capacity(k),
            per_client_recall_h0: Vec::with_capacity(k),
            per_client_recall_h1: Vec::with_capacity(k),
        };
        for c in 0..k {
            r.per_client_val_accuracy.push(parse_f64(f(8 + 3 * c))?);
            r.per_client_recall_h0.push(parse_opt(f(9 + 3 * c))?);
            r.per_client_recall_h1.push(parse_opt(f(10 + 3 * c))?);
        }
        out.push(r);
    }
    Ok(out)
}
