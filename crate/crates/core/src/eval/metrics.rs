use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate ranking quality over a set of queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
    /// Whether head and tail queries were pooled.
    pub both_directions: bool,
}

/// MRR and Hits@{1,3,10} of `ranks`.
pub fn compute_metrics(ranks: &[f64], both_directions: bool) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(MetricsReport {
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
        count: ranks.len(),
        both_directions,
    })
}

/// Expected MRR of a uniformly random ranking over `n` candidates,
/// `(Σ_{i=1}^{n} 1/i) / n`.
pub fn random_ranking_mrr(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum::<f64>() / n as f64
}

/// Mean and population standard deviation of the MRR across reports.
pub fn mrr_spread(reports: &[MetricsReport]) -> (f64, f64) {
    if reports.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.mrr).sum::<f64>() / n;
    let var = reports.iter().map(|r| (r.mrr - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
