//! Config-driven train/devel experiments producing UAR tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{load_manifest, Conversation, CorpusError, Manifest, Split, Task};
use crate::features::{
    apply_standardizer, concat_feature_sets, fit_standardizer, read_fset, FeatureError, FeatureMatrix, FormatError,
};
use crate::learn::{
    default_c_grid, evaluate_binary, fit_calibrator_cv, grid_search_c, ClassWeighting, EvalResult, GridPoint,
    LearnError, SvmParams, TrainedModel,
};
use crate::selection::{rank_relevant, RelevanceRanking, SelectionError};
use crate::turntaking::{tt_feature_matrix, TurnTakingError, DEFAULT_MERGE_GAP, TTC_NAMES};

pub const TOOL_NAME: &str = "turnlens";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("feature set {set}: conversation {id} has no row")]
    MissingRow { set: String, id: String },
    #[error("feature set {set}: no TT feature named {name}")]
    UnknownFeature { set: String, name: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    TurnTaking(#[from] TurnTakingError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    pub fn is_data_error(&self) -> bool {
        match self {
            ExperimentError::Corpus(e) => e.is_data_error(),
            ExperimentError::Format(e) => e.is_data_error(),
            ExperimentError::Io { .. } => false,
            _ => true,
        }
    }
}

/// One feature set to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSetSpec {
    /// All 64 turn-taking features.
    Tt,
    /// A fixed subset of TT; the default list when `names` is absent.
    Ttc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        names: Option<Vec<String>>,
    },
    /// TT features with positive gain on Train, or all of TT if none.
    Selected,
    /// A precomputed FSET file.
    Fset {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Concat { parts: Vec<FeatureSetSpec> },
}

impl FeatureSetSpec {
    pub fn display_name(&self) -> String {
        match self {
            FeatureSetSpec::Tt => "TT".into(),
            FeatureSetSpec::Ttc { .. } => "TTc".into(),
            FeatureSetSpec::Selected => "TTsel".into(),
            FeatureSetSpec::Fset { path, name } => name.clone().unwrap_or_else(|| {
                path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
            }),
            FeatureSetSpec::Concat { parts } => parts.iter().map(|p| p.display_name()).collect::<Vec<_>>().join("+"),
        }
    }

    fn needs_tt(&self) -> bool {
        match self {
            FeatureSetSpec::Tt | FeatureSetSpec::Ttc { .. } | FeatureSetSpec::Selected => true,
            FeatureSetSpec::Fset { .. } => false,
            FeatureSetSpec::Concat { parts } => parts.iter().any(|p| p.needs_tt()),
        }
    }

    fn fset_paths<'a>(&'a self, out: &mut Vec<&'a Path>) {
        match self {
            FeatureSetSpec::Fset { path, .. } => out.push(path),
            FeatureSetSpec::Concat { parts } => parts.iter().for_each(|p| p.fset_paths(out)),
            _ => {}
        }
    }
}

fn default_merge_gap() -> f64 {
    DEFAULT_MERGE_GAP
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub task: Task,
    pub feature_sets: Vec<FeatureSetSpec>,
    #[serde(default = "default_merge_gap")]
    pub merge_gap: f64,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default)]
    pub class_weighting: ClassWeighting,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Devel bootstrap resamples for a 95% UAR interval; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(default = "default_folds")]
    pub calibration_folds: usize,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>, task: Task, feature_sets: Vec<FeatureSetSpec>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            task,
            feature_sets,
            merge_gap: DEFAULT_MERGE_GAP,
            c_grid: default_c_grid(),
            class_weighting: ClassWeighting::None,
            seed: 0,
            output_dir: output_dir.into(),
            bootstrap: None,
            calibration_folds: default_folds(),
            base_dir: PathBuf::new(),
        }
    }

    /// Read a JSON config; relative paths in it are taken relative to the
    /// config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.feature_sets.is_empty() {
            return bad("at least one feature set is required".into());
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad("c_grid must be non-empty with positive values".into());
        }
        if !(self.merge_gap >= 0.0 && self.merge_gap.is_finite()) {
            return bad(format!("merge_gap must be >= 0, got {}", self.merge_gap));
        }
        if self.bootstrap == Some(0) {
            return bad("bootstrap needs at least one resample".into());
        }
        let mut names: Vec<String> = self.feature_sets.iter().map(|s| s.display_name()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate feature set name {}", w[0]));
        }
        let manifest = self.resolve(&self.manifest);
        if !manifest.is_file() {
            return bad(format!("manifest {} does not exist", manifest.display()));
        }
        let mut fsets = Vec::new();
        for s in &self.feature_sets {
            s.fset_paths(&mut fsets);
        }
        for p in fsets {
            let r = self.resolve(p);
            if !r.is_file() {
                return bad(format!("feature file {} does not exist", r.display()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetResult {
    pub feature_set: String,
    pub dim: usize,
    pub feature_names: Vec<String>,
    #[serde(rename = "best_C")]
    pub best_c: f64,
    pub devel_uar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devel_uar_ci95: Option<[f64; 2]>,
    pub devel: EvalResult,
    pub grid: Vec<GridPoint>,
    pub train_count: usize,
    pub devel_count: usize,
    pub train_label_counts: BTreeMap<String, usize>,
    pub devel_label_counts: BTreeMap<String, usize>,
    pub model_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub task: Task,
    pub config: ExperimentConfig,
    pub results: Vec<FeatureSetResult>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned table: feature set | dim | best C | UAR%.
    pub fn to_table(&self) -> String {
        let c_label = |c: f64| {
            let e = c.log2();
            if e.fract() == 0.0 {
                format!("2^{}", e as i64)
            } else {
                format!("{c}")
            }
        };
        let rows: Vec<[String; 4]> = self
            .results
            .iter()
            .map(|r| {
                let mut uar = format!("{:.1}", 100.0 * r.devel_uar);
                if let Some([lo, hi]) = r.devel_uar_ci95 {
                    let _ = write!(uar, " [{:.1}, {:.1}]", 100.0 * lo, 100.0 * hi);
                }
                [r.feature_set.clone(), r.dim.to_string(), c_label(r.best_c), uar]
            })
            .collect();
        let header = ["Feature set".to_string(), "Dim".into(), "Best C".into(), "UAR (%)".into()];
        let mut width = header.each_ref().map(|h| h.len());
        for r in &rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String; 4]| {
            format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            )
        };
        let mut out = format!("Task: {}\n", self.task);
        out += &line(&header);
        out += &format!("{}\n", "-".repeat(width.iter().sum::<usize>() + 6));
        for r in &rows {
            out += &line(r);
        }
        out
    }
}

/// Class index per conversation id for `task`, positive class first.
pub fn task_labels(convs: &[&Conversation], task: Task) -> Result<BTreeMap<String, usize>, CorpusError> {
    convs
        .iter()
        .map(|c| Ok((c.id.clone(), usize::from(!task.is_positive(c)?))))
        .collect()
}

/// Names of TT features with positive MDLP gain on the Train split, most
/// relevant first. May be empty.
pub fn derive_ttc(manifest: &Manifest, task: Task, merge_gap: f64) -> Result<RelevanceRanking, ExperimentError> {
    let convs = manifest.load_all()?;
    derive_ttc_from(&convs, task, merge_gap)
}

pub fn derive_ttc_from(convs: &[Conversation], task: Task, merge_gap: f64) -> Result<RelevanceRanking, ExperimentError> {
    let train: Vec<Conversation> = convs.iter().filter(|c| c.split == Split::Train).cloned().collect();
    if train.is_empty() {
        return Err(ExperimentError::Config("no Train conversations".into()));
    }
    let labels = task_labels(&train.iter().collect::<Vec<_>>(), task)?;
    let tt = tt_feature_matrix(&train, merge_gap)?;
    Ok(rank_relevant(&tt, &labels)?)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    tt: Option<FeatureMatrix>,
    selected: Option<Vec<String>>,
}

impl Context<'_> {
    fn build(&self, spec: &FeatureSetSpec) -> Result<FeatureMatrix, ExperimentError> {
        let tt = || self.tt.as_ref().expect("TT computed when needed");
        let subset = |set: &str, names: &[String]| {
            tt().select_columns(set, names).ok_or_else(|| {
                let missing = names.iter().find(|n| tt().column_index(n).is_none()).cloned().unwrap_or_default();
                ExperimentError::UnknownFeature { set: set.into(), name: missing }
            })
        };
        match spec {
            FeatureSetSpec::Tt => Ok(tt().clone()),
            FeatureSetSpec::Ttc { names } => {
                let names = names.clone().unwrap_or_else(|| TTC_NAMES.iter().map(|s| s.to_string()).collect());
                subset("TTc", &names)
            }
            FeatureSetSpec::Selected => {
                let names = self.selected.as_ref().expect("selection computed when needed");
                if names.is_empty() {
                    log::info!("no relevant TT feature on Train; keeping all of TT");
                    let mut m = tt().clone();
                    m.set_name = "TTsel".into();
                    Ok(m)
                } else {
                    subset("TTsel", names)
                }
            }
            FeatureSetSpec::Fset { path, name } => {
                let mut m = read_fset(self.config.resolve(path))?;
                if let Some(n) = name {
                    m.set_name = n.clone();
                }
                Ok(m)
            }
            FeatureSetSpec::Concat { parts } => {
                let built = parts.iter().map(|p| self.build(p)).collect::<Result<Vec<_>, _>>()?;
                Ok(concat_feature_sets(&built.iter().collect::<Vec<_>>())?)
            }
        }
    }
}

fn subset_rows(m: &FeatureMatrix, ids: &[&str], set: &str) -> Result<FeatureMatrix, ExperimentError> {
    let mut out = FeatureMatrix::new(m.set_name.clone(), m.feature_names.clone());
    for &id in ids {
        let row = m.row(id).ok_or_else(|| ExperimentError::MissingRow { set: set.into(), id: id.into() })?;
        out.push_row(id, row.to_vec())?;
    }
    Ok(out)
}

fn count_labels(y: &[bool], classes: [&str; 2]) -> BTreeMap<String, usize> {
    let pos = y.iter().filter(|&&v| v).count();
    BTreeMap::from([(classes[0].to_string(), pos), (classes[1].to_string(), y.len() - pos)])
}

/// Percentile bootstrap of devel UAR; resamples lacking a class are drawn
/// again.
pub fn bootstrap_uar_ci(y_true: &[bool], y_pred: &[bool], resamples: usize, seed: u64) -> Option<[f64; 2]> {
    let n = y_true.len();
    if n == 0 || y_true.iter().all(|&v| v) || y_true.iter().all(|&v| !v) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uars = Vec::with_capacity(resamples);
    while uars.len() < resamples {
        let mut conf = [[0usize; 2]; 2];
        for _ in 0..n {
            let i = rng.random_range(0..n);
            conf[usize::from(!y_true[i])][usize::from(!y_pred[i])] += 1;
        }
        let tp = conf[0][0] + conf[0][1];
        let tn = conf[1][0] + conf[1][1];
        if tp == 0 || tn == 0 {
            continue;
        }
        uars.push(0.5 * (conf[0][0] as f64 / tp as f64 + conf[1][1] as f64 / tn as f64));
    }
    uars.sort_by(f64::total_cmp);
    let q = |p: f64| uars[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Some([q(0.025), q(0.975)])
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Evaluate every feature set and write `report.json`, `report.txt` and
/// one model file per set under the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let manifest = load_manifest(config.resolve(&config.manifest))?;
    let convs = manifest.load_all()?;
    let task = config.task;
    let classes = task.classes();

    let train: Vec<&Conversation> = convs.iter().filter(|c| c.split == Split::Train).collect();
    let devel: Vec<&Conversation> = convs.iter().filter(|c| c.split == Split::Devel).collect();
    if train.is_empty() || devel.is_empty() {
        return Err(ExperimentError::Config("manifest needs both train and devel conversations".into()));
    }
    let train_y: Vec<bool> = train.iter().map(|c| task.is_positive(c)).collect::<Result<_, _>>()?;
    let devel_y: Vec<bool> = devel.iter().map(|c| task.is_positive(c)).collect::<Result<_, _>>()?;
    let train_ids: Vec<&str> = train.iter().map(|c| c.id.as_str()).collect();
    let devel_ids: Vec<&str> = devel.iter().map(|c| c.id.as_str()).collect();

    let needs_tt = config.feature_sets.iter().any(|s| s.needs_tt());
    let tt = if needs_tt { Some(tt_feature_matrix(&convs, config.merge_gap)?) } else { None };
    let selected = if config.feature_sets.iter().any(|s| matches!(s, FeatureSetSpec::Selected)) {
        let tt_train = subset_rows(tt.as_ref().unwrap(), &train_ids, "TT")?;
        let labels = task_labels(&train, task)?;
        Some(rank_relevant(&tt_train, &labels)?.names())
    } else {
        None
    };
    let ctx = Context { config, tt, selected };

    let out_dir = config.resolve(&config.output_dir);
    let model_dir = out_dir.join("models");
    fs::create_dir_all(&model_dir).map_err(|source| ExperimentError::Io { path: model_dir.clone(), source })?;

    let base = SvmParams::new(1.0).with_seed(config.seed).with_class_weighting(config.class_weighting);
    let results = config
        .feature_sets
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            let name = spec.display_name();
            let m = ctx.build(spec)?;
            let tr = subset_rows(&m, &train_ids, &name)?;
            let de = subset_rows(&m, &devel_ids, &name)?;
            let standardizer = fit_standardizer(&tr)?;
            let xs_tr = apply_standardizer(&standardizer, &tr)?.rows;
            let xs_de = apply_standardizer(&standardizer, &de)?.rows;

            let search = grid_search_c(&xs_tr, &train_y, &xs_de, &devel_y, &config.c_grid, &base, classes)?;
            let params = SvmParams { c: search.best_c, ..base.clone() };
            let calibrator = fit_calibrator_cv(&xs_tr, &train_y, &params, config.calibration_folds)?;
            let model = TrainedModel {
                weights: search.model.weights.clone(),
                bias: search.model.bias,
                c: search.best_c,
                standardizer,
                calibrator,
                positive_label: classes[0].into(),
                negative_label: classes[1].into(),
                set_name: name.clone(),
                feature_names: m.feature_names.clone(),
            };
            let model_file = format!("models/{}.json", file_safe(&name));
            let path = out_dir.join(&model_file);
            fs::write(&path, model.to_json()).map_err(|source| ExperimentError::Io { path, source })?;

            let devel_eval = evaluate_binary(&devel_y, &search.model.predict(&xs_de), classes)?;
            let ci = config.bootstrap.and_then(|b| {
                bootstrap_uar_ci(&devel_y, &search.model.predict(&xs_de), b, config.seed.wrapping_add(k as u64))
            });
            Ok(FeatureSetResult {
                feature_set: name,
                dim: m.width(),
                feature_names: m.feature_names.clone(),
                best_c: search.best_c,
                devel_uar: devel_eval.uar,
                devel_uar_ci95: ci,
                devel: devel_eval,
                grid: search.points,
                train_count: train.len(),
                devel_count: devel.len(),
                train_label_counts: count_labels(&train_y, classes),
                devel_label_counts: count_labels(&devel_y, classes),
                model_file,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let report = ExperimentReport {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_hash: config.hash(),
        seed: config.seed,
        task,
        config: config.clone(),
        results,
    };
    for (file, body) in [("report.json", report.to_json()), ("report.txt", report.to_table())] {
        let path = out_dir.join(file);
        fs::write(&path, body).map_err(|source| ExperimentError::Io { path, source })?;
    }
    Ok(report)
}
