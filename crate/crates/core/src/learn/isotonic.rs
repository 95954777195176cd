//! Isotonic posterior calibration (pool adjacent violators).

use serde::{Deserialize, Serialize};

use super::LearnError;

/// Weighted least-squares nondecreasing fit of `values`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(values.len(), weights.len());
    // Blocks of (weighted mean, total weight, member count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / w, w, c1 + c2);
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// Step function from raw scores to probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

/// Fit on (score, label) pairs. Equal scores are pooled first, so each
/// distinct score becomes one breakpoint.
pub fn fit_isotonic(scores: &[f64], labels: &[bool]) -> Result<IsotonicCalibrator, LearnError> {
    if scores.len() != labels.len() {
        return Err(LearnError::Length { rows: scores.len(), labels: labels.len() });
    }
    if scores.len() < 2 {
        return Err(LearnError::TooFewSamples(scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LearnError::NonFinite { row: scores.iter().position(|s| !s.is_finite()).unwrap() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut breakpoints: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for i in order {
        let y = if labels[i] { 1.0 } else { 0.0 };
        if breakpoints.last() == Some(&scores[i]) {
            *sums.last_mut().unwrap() += y;
            *weights.last_mut().unwrap() += 1.0;
        } else {
            breakpoints.push(scores[i]);
            sums.push(y);
            weights.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    let values = pava(&means, &weights);
    Ok(IsotonicCalibrator { breakpoints, values })
}

impl IsotonicCalibrator {
    /// Value of the last breakpoint at or below `score`; clamps outside the
    /// fitted range.
    pub fn calibrate(&self, score: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= score);
        self.values[idx.saturating_sub(1)]
    }
}
