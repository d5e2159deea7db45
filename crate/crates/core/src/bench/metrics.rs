//! Ranking and regression metrics.

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::grn::average_ranks;

/// Average precision with pessimistic ties: within equal scores negatives
/// are ranked ahead of positives.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, BenchError> {
    if scores.len() != labels.len() {
        return Err(BenchError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(BenchError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(labels[a].cmp(&labels[b]))
    });
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Pearson correlation; `NaN` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman correlation: Pearson of tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub pcc: f64,
    pub mae: f64,
    pub spearman: f64,
}

/// PCC, MAE and Spearman. Correlations are `NaN` (missing) for fewer than
/// two points or a constant side.
pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<RegressionMetrics, BenchError> {
    if pred.len() != target.len() {
        return Err(BenchError::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mae = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64;
    let (pcc, sp) = if pred.len() < 2 {
        (f64::NAN, f64::NAN)
    } else {
        (pearson(pred, target), spearman(pred, target))
    };
    Ok(RegressionMetrics { pcc, mae, spearman: sp })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Largest values.
    Up,
    /// Smallest values.
    Down,
    /// Largest values (centrality hubs).
    Top,
}

/// Indices of the `k` extreme values in `direction`, ties by ascending index.
pub fn top_k_indices(values: &[f64], k: usize, direction: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = match direction {
            Direction::Up | Direction::Top => values[b].total_cmp(&values[a]),
            Direction::Down => values[a].total_cmp(&values[b]),
        };
        c.then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Overlap of the predicted and true top-`k'` sets, `k' = min(k, n)`.
pub fn precision_at_k(pred: &[f64], target: &[f64], k: usize, direction: Direction) -> Result<f64, BenchError> {
    if pred.len() != target.len() {
        return Err(BenchError::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() || k == 0 {
        return Err(BenchError::EmptyInput);
    }
    let kk = k.min(pred.len());
    let mut truth = vec![false; pred.len()];
    for i in top_k_indices(target, kk, direction) {
        truth[i] = true;
    }
    let hits = top_k_indices(pred, kk, direction)
        .into_iter()
        .filter(|&i| truth[i])
        .count();
    Ok(hits as f64 / kk as f64)
}
