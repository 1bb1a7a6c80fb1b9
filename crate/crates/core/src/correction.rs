//! Benjamini-Hochberg adjustment and precision/recall/F-score metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectionError {
    #[error("p-value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("claims ({claims}) and truth ({truth}) differ in length")]
    LengthMismatch { claims: usize, truth: usize },
    #[error("at least one F-score weight is required")]
    NoWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPValues {
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up adjustment; output keeps input order.
pub fn bh_adjust(raw: &[f64]) -> Result<AdjustedPValues, CorrectionError> {
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(CorrectionError::OutOfRange { index, value });
    }
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let scaled = (raw[i] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(scaled);
        adjusted[i] = running;
    }
    Ok(AdjustedPValues { raw: raw.to_vec(), adjusted })
}

/// `(1 + w^2) / (w^2 / recall + 1 / precision)`; `None` if either input is 0.
pub fn f_score(precision: f64, recall: f64, w: f64) -> Option<f64> {
    if precision <= 0.0 || recall <= 0.0 {
        return None;
    }
    let w2 = w * w;
    Some((1.0 + w2) / (w2 / recall + 1.0 / precision))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// (weight, F_w) pairs in the order the weights were given.
    pub f_scores: Vec<(f64, Option<f64>)>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Metrics {
    pub fn f(&self, w: f64) -> Option<f64> {
        self.f_scores.iter().find(|(weight, _)| *weight == w).and_then(|(_, f)| *f)
    }
}

pub const DEFAULT_F_WEIGHTS: [f64; 3] = [0.5, 1.0, 2.0];

/// Precision, recall and F_w scores of `claims` (rejections) against `truth`
/// (true alternatives).
pub fn compute_metrics(claims: &[bool], truth: &[bool], weights: &[f64]) -> Result<Metrics, CorrectionError> {
    if claims.len() != truth.len() {
        return Err(CorrectionError::LengthMismatch { claims: claims.len(), truth: truth.len() });
    }
    if weights.is_empty() {
        return Err(CorrectionError::NoWeights);
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&c, &t) in claims.iter().zip(truth) {
        match (c, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let f_scores = weights
        .iter()
        .map(|&w| {
            let f = match (precision, recall) {
                (Some(p), Some(r)) => f_score(p, r, w),
                _ => None,
            };
            (w, f)
        })
        .collect();
    Ok(Metrics { precision, recall, f_scores, true_positives: tp, false_positives: fp, false_negatives: fn_ })
}
