//! Feature-set containers and the transforms applied to them before
//! classification.

mod io;

pub use io::{read_frmx, read_fset, write_frmx, write_fset, FormatError, FRMX_MAGIC, FSET_MAGIC, FORMAT_VERSION};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::Moments;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("{set}: row {id} has {got} values, expected {expected}")]
    Width { set: String, id: String, expected: usize, got: usize },
    #[error("{set}: duplicate row id {id}")]
    DuplicateId { set: String, id: String },
    #[error("{set}: row {id} contains a non-finite value")]
    NonFinite { set: String, id: String },
    #[error("cannot concatenate {left} and {right}: id sets differ (e.g. {example})")]
    IdMismatch { left: String, right: String, example: String },
    #[error("nothing to concatenate")]
    NoSets,
    #[error("frame matrix {id} has no frames")]
    EmptyFrames { id: String },
    #[error("frame matrix {id}: {len} values is not a multiple of dimension {dim}")]
    FrameShape { id: String, len: usize, dim: usize },
    #[error("standardizer fitted on {expected} features, matrix has {got}")]
    StandardizerWidth { expected: usize, got: usize },
    #[error("cannot fit a standardizer on an empty matrix")]
    EmptyMatrix,
}

/// A named feature set: one fixed-width row of 32-bit values per
/// conversation id, rows kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub set_name: String,
    pub feature_names: Vec<String>,
    rows: IndexMap<String, Vec<f32>>,
}

impl FeatureMatrix {
    pub fn new(set_name: impl Into<String>, feature_names: Vec<String>) -> Self {
        Self { set_name: set_name.into(), feature_names, rows: IndexMap::new() }
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<(), FeatureError> {
        let id = id.into();
        if values.len() != self.width() {
            return Err(FeatureError::Width {
                set: self.set_name.clone(),
                id,
                expected: self.width(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { set: self.set_name.clone(), id });
        }
        if self.rows.contains_key(&id) {
            return Err(FeatureError::DuplicateId { set: self.set_name.clone(), id });
        }
        self.rows.insert(id, values);
        Ok(())
    }

    pub fn row(&self, id: &str) -> Option<&[f32]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, set_name: &str, names: &[String]) -> Option<FeatureMatrix> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Option<_>>()?;
        let mut out = FeatureMatrix::new(set_name, names.to_vec());
        for (id, row) in self.rows() {
            out.rows.insert(id.to_string(), idx.iter().map(|&i| row[i]).collect());
        }
        Some(out)
    }
}

/// Frame-level features of one conversation (e.g. one vector every 20 ms),
/// row-major `frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub id: String,
    pub dim: usize,
    pub frame_period_ms: u32,
    pub data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(id: impl Into<String>, dim: usize, frame_period_ms: u32, data: Vec<f32>) -> Result<Self, FeatureError> {
        let id = id.into();
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(FeatureError::FrameShape { id, len: data.len(), dim });
        }
        if data.is_empty() {
            return Err(FeatureError::EmptyFrames { id });
        }
        Ok(Self { id, dim, frame_period_ms, data })
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Names of the pooled features for a frame dimension, matching the
/// `Mean | Sd | Kurtosis | Skewness` block order.
pub fn pooled_feature_names(dim: usize) -> Vec<String> {
    ["mean", "sd", "kurt", "skew"]
        .iter()
        .flat_map(|p| (0..dim).map(move |d| format!("{p}_{d}")))
        .collect()
}

/// Per-dimension functionals over frames, laid out as four blocks of
/// length `dim`: mean, standard deviation, excess kurtosis, skewness.
/// Population moments; a dimension with zero variance yields 0 for the last
/// three.
pub fn pool_functionals(fm: &FrameMatrix) -> Result<Vec<f64>, FeatureError> {
    let t = fm.frames();
    if t == 0 {
        return Err(FeatureError::EmptyFrames { id: fm.id.clone() });
    }
    let d = fm.dim;
    let mut out = vec![0.0; 4 * d];
    let mut column = vec![0.0f64; t];
    for j in 0..d {
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = f64::from(fm.data[i * d + j]);
        }
        let m = Moments::from_slice(&column);
        out[j] = m.mean;
        out[d + j] = m.std_dev();
        out[2 * d + j] = m.excess_kurtosis();
        out[3 * d + j] = m.skewness();
    }
    Ok(out)
}

pub fn truncate_head<T: Clone>(tokens: &[T], n: usize) -> Vec<T> {
    tokens[..n.min(tokens.len())].to_vec()
}

pub fn truncate_tail<T: Clone>(tokens: &[T], n: usize) -> Vec<T> {
    tokens[tokens.len().saturating_sub(n)..].to_vec()
}

/// Column-wise concatenation of sets sharing the same ids. Feature names
/// are prefixed with their source set (`Tw.x`), the set name is joined with
/// `+`, and rows follow the first set's order.
pub fn concat_feature_sets(sets: &[&FeatureMatrix]) -> Result<FeatureMatrix, FeatureError> {
    let (first, rest) = sets.split_first().ok_or(FeatureError::NoSets)?;
    if rest.is_empty() {
        return Ok((*first).clone());
    }
    for other in rest {
        let missing = first
            .ids()
            .find(|id| other.row(id).is_none())
            .or_else(|| other.ids().find(|id| first.row(id).is_none()));
        if let Some(example) = missing {
            return Err(FeatureError::IdMismatch {
                left: first.set_name.clone(),
                right: other.set_name.clone(),
                example: example.to_string(),
            });
        }
    }
    let name = sets.iter().map(|s| s.set_name.as_str()).collect::<Vec<_>>().join("+");
    let names = sets
        .iter()
        .flat_map(|s| s.feature_names.iter().map(move |f| format!("{}.{f}", s.set_name)))
        .collect();
    let mut out = FeatureMatrix::new(name, names);
    for id in first.ids() {
        let row = sets.iter().flat_map(|s| s.row(id).unwrap().iter().copied()).collect();
        out.rows.insert(id.to_string(), row);
    }
    Ok(out)
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Dense `f64` design matrix with row ids, the input format for training.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DenseMatrix {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Mean and population standard deviation of every column; zero-variance
/// columns get scale 1.
pub fn fit_standardizer(train: &FeatureMatrix) -> Result<StandardizerParams, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyMatrix);
    }
    let mut column = Vec::with_capacity(train.len());
    let mut mean = Vec::with_capacity(train.width());
    let mut scale = Vec::with_capacity(train.width());
    for j in 0..train.width() {
        column.clear();
        column.extend(train.rows().map(|(_, r)| f64::from(r[j])));
        let m = Moments::from_slice(&column);
        mean.push(m.mean);
        let sd = m.std_dev();
        scale.push(if sd > 0.0 { sd } else { 1.0 });
    }
    Ok(StandardizerParams { mean, scale })
}

impl StandardizerParams {
    pub fn transform_row(&self, row: &[f32]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (m, s))| (f64::from(x) - m) / s)
            .collect()
    }
}

/// Apply z-scoring; the result is kept in `f64` for the learner.
pub fn apply_standardizer(params: &StandardizerParams, m: &FeatureMatrix) -> Result<DenseMatrix, FeatureError> {
    if m.width() != params.mean.len() {
        return Err(FeatureError::StandardizerWidth { expected: params.mean.len(), got: m.width() });
    }
    let (ids, rows) = m.rows().map(|(id, r)| (id.to_string(), params.transform_row(r))).unzip();
    Ok(DenseMatrix { ids, rows })
}
