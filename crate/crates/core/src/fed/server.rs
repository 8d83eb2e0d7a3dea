use super::FedError;
use crate::model::WeightVector;

/// `gamma_k = n_k / sum_j n_j`.
pub fn gammas_from_sizes(sizes: &[usize]) -> Result<Vec<f64>, FedError> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(FedError::Config("client sizes sum to zero".into()));
    }
    Ok(sizes.iter().map(|&n| n as f64 / total as f64).collect())
}

/// Weighted elementwise sum `sum_k gamma_k * u_k`, evaluated as
/// `u_0 + sum_{k>0} gamma_k * (u_k - u_0)`. The two agree whenever the
/// gammas sum to one, and this form returns identical updates unchanged
/// bit for bit.
pub fn server_aggregate(updates: &[WeightVector], gammas: &[f64]) -> Result<WeightVector, FedError> {
    let first = updates.first().ok_or_else(|| FedError::Config("no updates to aggregate".into()))?;
    if gammas.len() != updates.len() {
        return Err(FedError::Config(format!("{} gammas for {} updates", gammas.len(), updates.len())));
    }
    let sum: f64 = gammas.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(FedError::GammaSum(sum));
    }
    for (k, u) in updates.iter().enumerate() {
        if u.layout != first.layout || u.values.len() != first.values.len() {
            return Err(FedError::LayoutMismatch(format!("update {k} has a different layout")));
        }
    }
    let base = &first.values;
    let mut out = base.clone();
    for (u, &g) in updates.iter().zip(gammas).skip(1) {
        for ((o, &v), &b) in out.iter_mut().zip(&u.values).zip(base) {
            *o += g * (v - b);
        }
    }
    Ok(WeightVector { values: out, layout: first.layout.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global: WeightVector,
    pub gammas: Vec<f64>,
    pub round: usize,
    pub target_recall: f64,
    pub max_rounds: usize,
}
