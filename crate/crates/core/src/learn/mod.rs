//! Linear SVM training, isotonic calibration, UAR evaluation and the
//! complexity-parameter search.

mod isotonic;
mod metrics;
mod svm;

pub use isotonic::{fit_isotonic, pava, IsotonicCalibrator};
pub use metrics::{evaluate, evaluate_binary, uar, EvalResult};
pub use svm::{train_svm, ClassWeighting, LinearModel, SvmFit, SvmParams, DEFAULT_MAX_EPOCHS, DEFAULT_TOLERANCE};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::StandardizerParams;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{rows} rows but {labels} labels")]
    Length { rows: usize, labels: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    Width { row: usize, expected: usize, got: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("labels must be -1 or +1")]
    BadLabel,
    #[error("complexity parameter C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("class {0} has no samples")]
    EmptyClass(String),
    #[error("empty C grid")]
    EmptyGrid,
}

/// `2^-15, 2^-13, ..., 2^5`.
pub fn default_c_grid() -> Vec<f64> {
    (-15..=5).step_by(2).map(|e| 2f64.powi(e)).collect()
}

pub fn to_signed(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "C")]
    pub c: f64,
    pub devel_uar: f64,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best_c: f64,
    pub model: LinearModel,
    pub devel: EvalResult,
    pub points: Vec<GridPoint>,
}

/// Train once per grid value and keep the model with the highest devel
/// UAR; ties go to the smallest `C`. Grid values train in parallel.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_c(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    devel_x: &[Vec<f64>],
    devel_y: &[bool],
    grid: &[f64],
    base: &SvmParams,
    class_names: [&str; 2],
) -> Result<GridSearch, LearnError> {
    if grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    let ys = to_signed(train_y);
    let mut runs: Vec<(f64, SvmFit, EvalResult)> = grid
        .par_iter()
        .map(|&c| {
            let params = SvmParams { c, ..base.clone() };
            let fit = train_svm(train_x, &ys, &params)?;
            let eval = evaluate_binary(devel_y, &fit.model.predict(devel_x), class_names)?;
            Ok((c, fit, eval))
        })
        .collect::<Result<_, LearnError>>()?;
    runs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let points = runs
        .iter()
        .map(|(c, fit, eval)| GridPoint { c: *c, devel_uar: eval.uar, epochs: fit.epochs, converged: fit.converged })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.2.uar > runs[best].2.uar {
            best = i;
        }
    }
    let (best_c, fit, devel) = runs.swap_remove(best);
    Ok(GridSearch { best_c, model: fit.model, devel, points })
}

/// Stratified fold index for every sample.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

/// Scores of every training sample from a model that did not see it.
/// The fold count shrinks to the minority class size when needed; with a
/// single minority sample the in-sample scores are returned instead.
pub fn out_of_fold_scores(x: &[Vec<f64>], y: &[bool], params: &SvmParams, folds: usize) -> Result<Vec<f64>, LearnError> {
    let pos = y.iter().filter(|&&v| v).count();
    let minority = pos.min(y.len() - pos);
    let folds = folds.min(minority);
    if folds < 2 {
        let fit = train_svm(x, &to_signed(y), params)?;
        return Ok(fit.model.decision_scores(x));
    }
    let assignment = stratified_folds(y, folds, params.seed.wrapping_add(0x5eed));
    let mut scores = vec![0.0; x.len()];
    for f in 0..folds {
        let (mut tx, mut ty) = (Vec::new(), Vec::new());
        for i in (0..x.len()).filter(|&i| assignment[i] != f) {
            tx.push(x[i].clone());
            ty.push(if y[i] { 1.0 } else { -1.0 });
        }
        let model = train_svm(&tx, &ty, params)?.model;
        for i in (0..x.len()).filter(|&i| assignment[i] == f) {
            scores[i] = model.score(&x[i]);
        }
    }
    Ok(scores)
}

/// Isotonic calibrator fitted on pooled out-of-fold training scores.
pub fn fit_calibrator_cv(x: &[Vec<f64>], y: &[bool], params: &SvmParams, folds: usize) -> Result<IsotonicCalibrator, LearnError> {
    let scores = out_of_fold_scores(x, y, params, folds)?;
    fit_isotonic(&scores, y)
}

/// A complete classifier: standardizer, linear model and calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub standardizer: StandardizerParams,
    pub calibrator: IsotonicCalibrator,
    pub positive_label: String,
    #[serde(default)]
    pub negative_label: String,
    #[serde(default)]
    pub set_name: String,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl TrainedModel {
    pub fn linear(&self) -> LinearModel {
        LinearModel { weights: self.weights.clone(), bias: self.bias, c: self.c }
    }

    /// Raw decision score of an unstandardized feature row.
    pub fn score_row(&self, row: &[f32]) -> f64 {
        let z = self.standardizer.transform_row(row);
        self.weights.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn probability(&self, row: &[f32]) -> f64 {
        self.calibrator.calibrate(self.score_row(row))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
