//! Confusion matrices and unweighted average recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub recalls: Vec<f64>,
    pub uar: f64,
}

impl EvalResult {
    /// Build from a confusion matrix over `classes`; every row must be
    /// non-empty.
    pub fn from_confusion(classes: Vec<String>, confusion: Vec<Vec<usize>>) -> Result<Self, LearnError> {
        let recalls = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    Err(LearnError::EmptyClass(classes[i].clone()))
                } else {
                    Ok(row[i] as f64 / total as f64)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let uar = recalls.iter().sum::<f64>() / recalls.len() as f64;
        Ok(Self { classes, confusion, recalls, uar })
    }

    /// UAR recomputed from the stored confusion matrix.
    pub fn recompute_uar(&self) -> f64 {
        let recalls: Vec<f64> = self
            .confusion
            .iter()
            .enumerate()
            .map(|(i, r)| r[i] as f64 / r.iter().sum::<usize>() as f64)
            .collect();
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// Per-class recall and their mean. Classes are the distinct values of
/// `y_true` (sorted); predictions outside that set count as errors.
pub fn evaluate<L: Ord + ToString>(y_true: &[L], y_pred: &[L]) -> Result<EvalResult, LearnError> {
    if y_true.len() != y_pred.len() {
        return Err(LearnError::Length { rows: y_true.len(), labels: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(LearnError::TooFewSamples(0));
    }
    let mut index: BTreeMap<&L, usize> = BTreeMap::new();
    for l in y_true {
        index.entry(l).or_insert(0);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let k = index.len();
    // Predictions of unseen classes are misses.
    let mut confusion = vec![vec![0; k]; k];
    let mut stray = vec![0; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        let ti = index[t];
        match index.get(p) {
            Some(&pi) => confusion[ti][pi] += 1,
            None => stray[ti] += 1,
        }
    }
    let classes: Vec<String> = index.keys().map(|l| l.to_string()).collect();
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(i, r)| r[i] as f64 / (r.iter().sum::<usize>() + stray[i]) as f64)
        .collect();
    let uar = recalls.iter().sum::<f64>() / k as f64;
    Ok(EvalResult { classes, confusion, recalls, uar })
}

/// Unweighted average recall.
pub fn uar<L: Ord + ToString>(y_true: &[L], y_pred: &[L]) -> Result<f64, LearnError> {
    evaluate(y_true, y_pred).map(|r| r.uar)
}

/// Binary evaluation with fixed class order `[positive, negative]`.
pub fn evaluate_binary(y_true: &[bool], y_pred: &[bool], names: [&str; 2]) -> Result<EvalResult, LearnError> {
    if y_true.len() != y_pred.len() {
        return Err(LearnError::Length { rows: y_true.len(), labels: y_pred.len() });
    }
    let mut confusion = vec![vec![0; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[usize::from(!t)][usize::from(!p)] += 1;
    }
    EvalResult::from_confusion(names.iter().map(|s| s.to_string()).collect(), confusion)
}
