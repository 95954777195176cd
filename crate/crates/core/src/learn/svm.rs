//! L2-regularized hinge-loss linear SVM trained by dual coordinate descent.
//!
//! The bias is learned as the weight of an implicit constant feature equal
//! to 1, so the solver works on `x~ = [x, 1]` and `w~ = [w, b]`. The dual is
//!
//! ```text
//! max  sum_i a_i - 1/2 || sum_i a_i y_i x~_i ||^2    s.t. 0 <= a_i <= C cw(y_i)
//! ```
//!
//! and every coordinate step maximizes it exactly along one `a_i`, so the
//! dual objective never decreases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    /// Every sample costs `C`.
    #[default]
    None,
    /// Inverse class frequency: `cw(y) = n / (2 n_y)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl SvmParams {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            class_weighting: ClassWeighting::None,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_class_weighting(mut self, cw: ClassWeighting) -> Self {
        self.class_weighting = cw;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl LinearModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// `w . x + b` for every row.
    pub fn decision_scores(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    /// `true` (positive class) when the score is non-negative.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<bool> {
        rows.iter().map(|r| self.score(r) >= 0.0).collect()
    }
}

/// Result of one training run with its convergence record.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: LinearModel,
    pub alphas: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective after each epoch.
    pub dual_objective: Vec<f64>,
}

impl SvmFit {
    /// Primal objective `1/2 ||w~||^2 + sum_i C cw_i hinge_i` of the final model.
    pub fn primal_objective(&self, x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> f64 {
        let upper = upper_bounds(y, params);
        let m = &self.model;
        let reg = 0.5 * (dot(&m.weights, &m.weights) + m.bias * m.bias);
        let loss: f64 = x
            .iter()
            .zip(y)
            .zip(&upper)
            .map(|((xi, yi), u)| u * (1.0 - yi * m.score(xi)).max(0.0))
            .sum();
        reg + loss
    }

    pub fn duality_gap(&self, x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> f64 {
        self.primal_objective(x, y, params) - self.dual_objective.last().copied().unwrap_or(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn upper_bounds(y: &[f64], params: &SvmParams) -> Vec<f64> {
    match params.class_weighting {
        ClassWeighting::None => vec![params.c; y.len()],
        ClassWeighting::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
            let neg = n - pos;
            y.iter()
                .map(|&v| params.c * n / (2.0 * if v > 0.0 { pos } else { neg }))
                .collect()
        }
    }
}

fn validate(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<usize, LearnError> {
    if x.len() != y.len() {
        return Err(LearnError::Length { rows: x.len(), labels: y.len() });
    }
    if x.len() < 2 {
        return Err(LearnError::TooFewSamples(x.len()));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(LearnError::InvalidC(params.c));
    }
    let dim = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(LearnError::Width { row: i, expected: dim, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite { row: i });
        }
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(LearnError::BadLabel);
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(LearnError::SingleClass);
    }
    Ok(dim)
}

/// Train on rows `x` with labels `y` in {-1, +1}. Deterministic for a
/// given seed: the only randomness is the per-epoch visiting order.
pub fn train_svm(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<SvmFit, LearnError> {
    let dim = validate(x, y, params)?;
    let n = x.len();
    let upper = upper_bounds(y, params);
    let diag: Vec<f64> = x.iter().map(|r| dot(r, r) + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut dual_objective = Vec::new();
    let mut alpha_sum = 0.0;
    let mut converged = false;
    let mut epochs = 0;

    while epochs < params.max_epochs {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let g = y[i] * (dot(&w, &x[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(&x[i]) {
                        *wj += step * xj;
                    }
                    b += step;
                    alpha_sum += alpha[i] - old;
                }
            }
        }
        epochs += 1;
        dual_objective.push(alpha_sum - 0.5 * (dot(&w, &w) + b * b));
        if max_violation < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("svm: C={} stopped after {epochs} epochs without converging", params.c);
    }
    Ok(SvmFit {
        model: LinearModel { weights: w, bias: b, c: params.c },
        alphas: alpha,
        epochs,
        converged,
        dual_objective,
    })
}
