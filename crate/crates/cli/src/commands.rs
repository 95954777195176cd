use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use turnlens::corpus::{load_manifest, parse_conversation, Conversation, Split, Task};
use turnlens::experiment::{derive_ttc, run_experiment, task_labels, ExperimentConfig};
use turnlens::features::{
    apply_standardizer, concat_feature_sets, fit_standardizer, pool_functionals, pooled_feature_names, read_frmx,
    read_fset, write_fset, FeatureMatrix,
};
use turnlens::learn::{
    default_c_grid, evaluate_binary, fit_calibrator_cv, grid_search_c, train_svm, ClassWeighting, SvmParams,
    TrainedModel,
};
use turnlens::selection::rank_relevant;
use turnlens::synth::{generate_dataset, pause_contrast_config, DatasetConfig};
use turnlens::turntaking::{segment_conversation, tt_feature_matrix};
use turnlens::Error;

use crate::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_data_error() => 2,
            CliError::Lib(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

macro_rules! lib_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Lib(e.into())
            }
        }
    )*};
}

lib_error!(
    Error,
    turnlens::CorpusError,
    turnlens::TurnTakingError,
    turnlens::FeatureError,
    turnlens::FormatError,
    turnlens::SelectionError,
    turnlens::LearnError,
    turnlens::SynthError,
    turnlens::ExperimentError
);

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Lib(Error::Io { path: path.into(), source })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|source| CliError::Lib(Error::Json { context: path.display().to_string(), source }))
}

/// Write to `out`, or to standard output when absent.
fn emit(out: Option<&Path>, mut body: String) -> Result<()> {
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match out {
        Some(p) => fs::write(p, body).map_err(|e| io_error(p, e)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Segment(a) => {
            let path = &a.input;
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            let conv = parse_conversation(&bytes)?;
            let seq = segment_conversation(&conv, a.merge_gap)?;
            emit(a.out.as_deref(), seq.to_json())
        }
        Command::Tt(a) => {
            let convs = load_manifest(&a.manifest)?.load_all()?;
            let m = tt_feature_matrix(&convs, a.merge_gap)?;
            write_fset(&a.out, &m)?;
            log::info!("wrote {} rows x {} features to {}", m.len(), m.width(), a.out.display());
            Ok(())
        }
        Command::Select(a) => {
            let ranking = match &a.features {
                None => derive_ttc(&load_manifest(&a.manifest)?, a.task, a.merge_gap)?,
                Some(path) => {
                    let convs = load_manifest(&a.manifest)?.load_all()?;
                    let train: Vec<&Conversation> = convs.iter().filter(|c| c.split == Split::Train).collect();
                    let ids: Vec<&str> = train.iter().map(|c| c.id.as_str()).collect();
                    let m = rows_for(&read_fset(path)?, &ids)?;
                    rank_relevant(&m, &task_labels(&train, a.task)?)?
                }
            };
            if ranking.is_empty() {
                log::warn!("no feature has positive information gain");
            }
            emit(a.out.as_deref(), ranking.to_json())
        }
        Command::Pool(a) => pool(a),
        Command::Concat(a) => {
            let sets = a.inputs.iter().map(read_fset).collect::<std::result::Result<Vec<_>, _>>()?;
            let m = concat_feature_sets(&sets.iter().collect::<Vec<_>>())?;
            write_fset(&a.out, &m)?;
            Ok(())
        }
        Command::Train(a) => train(a, seed),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(dir) = &a.out_dir {
                cfg.output_dir = std::path::absolute(dir).map_err(|e| io_error(dir, e))?;
            }
            let report = run_experiment(&cfg)?;
            emit(None, report.to_table())
        }
        Command::Synth(a) => {
            if a.example_config {
                let cfg = pause_contrast_config(a.n.unwrap_or(1200), 3.0);
                return emit(None, serde_json::to_string_pretty(&cfg).expect("config serializes"));
            }
            let (Some(config), Some(out)) = (&a.config, &a.out) else {
                return Err(CliError::Usage("synth needs --config and --out".into()));
            };
            let mut cfg: DatasetConfig = parse_json(config, &read_text(config)?)?;
            if let Some(n) = a.n {
                cfg.n = n;
            }
            let manifest = generate_dataset(&cfg, out, seed)?;
            let counts = manifest.split_counts();
            eprintln!(
                "wrote {} conversations ({} train, {} devel) to {}",
                manifest.entries.len(),
                counts.get(&Split::Train).copied().unwrap_or(0),
                counts.get(&Split::Devel).copied().unwrap_or(0),
                out.display()
            );
            Ok(())
        }
    }
}

/// Rows of `m` for `ids`, in that order.
fn rows_for(m: &FeatureMatrix, ids: &[&str]) -> Result<FeatureMatrix> {
    let mut out = FeatureMatrix::new(m.set_name.clone(), m.feature_names.clone());
    for &id in ids {
        let row = m.row(id).ok_or_else(|| {
            CliError::Lib(Error::Experiment(turnlens::ExperimentError::MissingRow {
                set: m.set_name.clone(),
                id: id.into(),
            }))
        })?;
        out.push_row(id, row.to_vec())?;
    }
    Ok(out)
}

fn pool(a: &crate::PoolArgs) -> Result<()> {
    let dir = &a.frames;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| io_error(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "frmx"))
        .collect();
    files.sort();
    let pooled: Vec<(String, usize, Vec<f32>)> = files
        .par_iter()
        .map(|p| {
            let fm = read_frmx(p)?;
            let v = pool_functionals(&fm)?;
            Ok((fm.id, fm.dim, v.into_iter().map(|x| x as f32).collect()))
        })
        .collect::<Result<_>>()?;
    let Some(dim) = pooled.first().map(|p| p.1) else {
        return Err(CliError::Lib(Error::Feature(turnlens::FeatureError::EmptyMatrix)));
    };
    let mut by_id: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    let mut m = FeatureMatrix::new(a.name.clone(), pooled_feature_names(dim));
    let mut order = Vec::new();
    for (id, _, row) in pooled {
        order.push(id.clone());
        if by_id.insert(id.clone(), row).is_some() {
            return Err(turnlens::FeatureError::DuplicateId { set: a.name.clone(), id }.into());
        }
    }
    if let Some(manifest) = &a.manifest {
        order = load_manifest(manifest)?.entries.into_iter().map(|e| e.id).collect();
    }
    for id in order {
        let row = by_id.remove(&id).ok_or_else(|| {
            CliError::Lib(Error::Experiment(turnlens::ExperimentError::MissingRow { set: a.name.clone(), id: id.clone() }))
        })?;
        m.push_row(id, row)?;
    }
    if !by_id.is_empty() {
        log::warn!("{} frame files are not in the manifest and were skipped", by_id.len());
    }
    write_fset(&a.out, &m)?;
    Ok(())
}

/// Ids, raw rows and positive-class flags of one split.
type SplitRows = (Vec<String>, Vec<Vec<f32>>, Vec<bool>);

struct Loaded {
    matrix: FeatureMatrix,
    convs: Vec<Conversation>,
}

impl Loaded {
    fn split(&self, split: Split, task: Task) -> Result<SplitRows> {
        let convs: Vec<&Conversation> = self.convs.iter().filter(|c| c.split == split).collect();
        let ids: Vec<&str> = convs.iter().map(|c| c.id.as_str()).collect();
        let m = rows_for(&self.matrix, &ids)?;
        let y = convs.iter().map(|c| task.is_positive(c)).collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((
            ids.iter().map(|s| s.to_string()).collect(),
            m.rows().map(|(_, r)| r.to_vec()).collect(),
            y,
        ))
    }
}

fn load_features(src: &crate::FeatureSource) -> Result<Loaded> {
    let convs = load_manifest(&src.manifest)?.load_all()?;
    let matrix = if src.features == "tt" {
        tt_feature_matrix(&convs, src.merge_gap)?
    } else {
        read_fset(&src.features)?
    };
    Ok(Loaded { matrix, convs })
}

fn train(a: &crate::TrainArgs, seed: u64) -> Result<()> {
    let task = a.source.task;
    let classes = task.classes();
    let data = load_features(&a.source)?;
    let (train_ids, _, train_y) = data.split(Split::Train, task)?;
    let ids: Vec<&str> = train_ids.iter().map(String::as_str).collect();
    let tr = rows_for(&data.matrix, &ids)?;
    let standardizer = fit_standardizer(&tr)?;
    let xs = apply_standardizer(&standardizer, &tr)?.rows;
    let weighting = if a.balanced { ClassWeighting::Balanced } else { ClassWeighting::None };
    let base = SvmParams::new(1.0).with_seed(seed).with_class_weighting(weighting);

    let (c, linear) = match a.c {
        Some(c) => (c, train_svm(&xs, &turnlens::learn::to_signed(&train_y), &SvmParams { c, ..base.clone() })?.model),
        None => {
            let (devel_ids, _, devel_y) = data.split(Split::Devel, task)?;
            let ids: Vec<&str> = devel_ids.iter().map(String::as_str).collect();
            let de = apply_standardizer(&standardizer, &rows_for(&data.matrix, &ids)?)?.rows;
            let search = grid_search_c(&xs, &train_y, &de, &devel_y, &default_c_grid(), &base, classes)?;
            log::info!("best C = {} (devel UAR {:.4})", search.best_c, search.devel.uar);
            (search.best_c, search.model)
        }
    };
    let calibrator = fit_calibrator_cv(&xs, &train_y, &SvmParams { c, ..base }, a.calibration_folds)?;
    let model = TrainedModel {
        weights: linear.weights,
        bias: linear.bias,
        c,
        standardizer,
        calibrator,
        positive_label: classes[0].into(),
        negative_label: classes[1].into(),
        set_name: data.matrix.set_name.clone(),
        feature_names: data.matrix.feature_names.clone(),
    };
    emit(a.out.as_deref(), model.to_json())
}

fn eval(a: &crate::EvalArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "devel" => Split::Devel,
        other => return Err(CliError::Usage(format!("unknown split {other:?} (expected train or devel)"))),
    };
    let task = a.source.task;
    let model: TrainedModel = parse_json(&a.model, &read_text(&a.model)?)?;
    let data = load_features(&a.source)?;
    if !model.feature_names.is_empty() && model.feature_names != data.matrix.feature_names {
        return Err(CliError::Lib(Error::Feature(turnlens::FeatureError::StandardizerWidth {
            expected: model.feature_names.len(),
            got: data.matrix.width(),
        })));
    }
    if model.standardizer.mean.len() != data.matrix.width() {
        return Err(CliError::Lib(Error::Feature(turnlens::FeatureError::StandardizerWidth {
            expected: model.standardizer.mean.len(),
            got: data.matrix.width(),
        })));
    }
    let (ids, rows, y) = data.split(split, task)?;
    let scores: Vec<f64> = rows.iter().map(|r| model.score_row(r)).collect();
    let pred: Vec<bool> = scores.iter().map(|&s| s >= 0.0).collect();
    let result = evaluate_binary(&y, &pred, task.classes())?;
    let predictions: Vec<_> = ids
        .iter()
        .zip(&scores)
        .zip(&y)
        .map(|((id, &s), &t)| {
            json!({
                "id": id,
                "score": s,
                "probability": model.calibrator.calibrate(s),
                "predicted": if s >= 0.0 { &model.positive_label } else { &model.negative_label },
                "label": task.classes()[usize::from(!t)],
            })
        })
        .collect();
    let body = json!({
        "task": task,
        "split": split,
        "C": model.c,
        "uar": result.uar,
        "evaluation": result,
        "predictions": predictions,
    });
    emit(a.out.as_deref(), serde_json::to_string_pretty(&body).expect("json"))
}
