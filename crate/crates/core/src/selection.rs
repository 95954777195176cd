//! Feature relevance by information gain over MDLP-discretized features.
//!
//! Each feature is discretized against the class with Fayyad-Irani
//! minimum-description-length splitting; the information gain of the
//! resulting contingency table measures relevance. A feature for which no
//! split passes the MDL test has a single bin and therefore zero gain.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("contingency table needs at least one bin and two classes")]
    Shape,
    #[error("contingency table rows have different lengths")]
    Ragged,
    #[error("no label for row {0}")]
    MissingLabel(String),
    #[error("{labels} labels given for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("{values} values but {labels} labels")]
    Length { values: usize, labels: usize },
}

/// Shannon entropy in bits of a class-count vector (`0 log 0 = 0`). An
/// all-zero vector has entropy 0.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Counts indexed `[bin][class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<usize>>) -> Result<Self, SelectionError> {
        let classes = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || classes < 2 {
            return Err(SelectionError::Shape);
        }
        if counts.iter().any(|r| r.len() != classes) {
            return Err(SelectionError::Ragged);
        }
        Ok(Self { counts })
    }

    /// Tabulate bin assignments against class labels.
    pub fn from_assignments(bins: &[usize], labels: &[usize], n_bins: usize, n_classes: usize) -> Result<Self, SelectionError> {
        if bins.len() != labels.len() {
            return Err(SelectionError::Length { values: bins.len(), labels: labels.len() });
        }
        let mut counts = vec![vec![0; n_classes.max(2)]; n_bins.max(1)];
        for (&b, &c) in bins.iter().zip(labels) {
            counts[b][c] += 1;
        }
        Self::new(counts)
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn class_totals(&self) -> Vec<usize> {
        let k = self.counts[0].len();
        (0..k).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }
}

/// `H(class) - H(class | bin)` in bits.
pub fn information_gain_binned(table: &ContingencyTable) -> Result<f64, SelectionError> {
    let total = table.total();
    if total == 0 {
        return Err(SelectionError::EmptyTable);
    }
    let h_class = entropy(&table.class_totals());
    let n = total as f64;
    let h_cond: f64 = table
        .bins()
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64 / n * entropy(row))
        .sum();
    Ok((h_class - h_cond).clamp(0.0, h_class))
}

/// A run of equal feature values with its class histogram.
struct Group {
    value: f64,
    counts: Vec<usize>,
}

fn distinct_classes(counts: &[usize]) -> usize {
    counts.iter().filter(|&&c| c > 0).count()
}

fn add(acc: &mut [usize], x: &[usize]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// MDL acceptance test for splitting `all` into `left` and `right`.
pub fn mdl_accepts(all: &[usize], left: &[usize], right: &[usize]) -> bool {
    let n = all.iter().sum::<usize>() as f64;
    let n1 = left.iter().sum::<usize>() as f64;
    let n2 = right.iter().sum::<usize>() as f64;
    let gain = entropy(all) - (n1 / n) * entropy(left) - (n2 / n) * entropy(right);
    gain > mdl_threshold(all, left, right)
}

/// `(log2(n - 1) + delta) / n`, the gain a split must exceed.
pub fn mdl_threshold(all: &[usize], left: &[usize], right: &[usize]) -> f64 {
    let n = all.iter().sum::<usize>() as f64;
    let (h, h1, h2) = (entropy(all), entropy(left), entropy(right));
    let k = distinct_classes(all) as f64;
    let k1 = distinct_classes(left) as f64;
    let k2 = distinct_classes(right) as f64;
    let delta = (3f64.powf(k) - 2.0).log2() - (k * h - k1 * h1 - k2 * h2);
    ((n - 1.0).log2() + delta) / n
}

fn split_groups(groups: &[Group], n_classes: usize, cuts: &mut Vec<f64>) {
    if groups.len() < 2 {
        return;
    }
    let mut all = vec![0; n_classes];
    for g in groups {
        add(&mut all, &g.counts);
    }
    let n = all.iter().sum::<usize>() as f64;
    if distinct_classes(&all) < 2 {
        return;
    }

    let mut left = vec![0; n_classes];
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for b in 1..groups.len() {
        add(&mut left, &groups[b - 1].counts);
        let (prev, next) = (&groups[b - 1].counts, &groups[b].counts);
        // Boundary points only: skip cuts between two pure groups of the
        // same class.
        let same_pure = distinct_classes(prev) == 1
            && distinct_classes(next) == 1
            && prev.iter().position(|&c| c > 0) == next.iter().position(|&c| c > 0);
        if same_pure {
            continue;
        }
        let right: Vec<usize> = all.iter().zip(&left).map(|(a, l)| a - l).collect();
        let nl = left.iter().sum::<usize>() as f64;
        let e = nl / n * entropy(&left) + (n - nl) / n * entropy(&right);
        if best.as_ref().is_none_or(|(be, _, _)| e < *be) {
            best = Some((e, b, left.clone()));
        }
    }
    let Some((_, b, left)) = best else { return };
    let right: Vec<usize> = all.iter().zip(&left).map(|(a, l)| a - l).collect();
    if !mdl_accepts(&all, &left, &right) {
        return;
    }
    split_groups(&groups[..b], n_classes, cuts);
    cuts.push(0.5 * (groups[b - 1].value + groups[b].value));
    split_groups(&groups[b..], n_classes, cuts);
}

/// Cut points (ascending) from recursive entropy-minimizing binary splits
/// that pass the MDL criterion. Labels are class indices.
pub fn discretize_mdlp(values: &[f64], labels: &[usize]) -> Result<Vec<f64>, SelectionError> {
    if values.len() != labels.len() {
        return Err(SelectionError::Length { values: values.len(), labels: labels.len() });
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut groups: Vec<Group> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.value == values[i] => g.counts[labels[i]] += 1,
            _ => {
                let mut counts = vec![0; n_classes];
                counts[labels[i]] += 1;
                groups.push(Group { value: values[i], counts });
            }
        }
    }
    let mut cuts = Vec::new();
    split_groups(&groups, n_classes, &mut cuts);
    Ok(cuts)
}

/// Bin index of `v` given ascending cut points.
pub fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c < v)
}

/// Information gain of one feature column after MDLP discretization.
pub fn feature_gain(values: &[f64], labels: &[usize]) -> Result<f64, SelectionError> {
    let cuts = discretize_mdlp(values, labels)?;
    if cuts.is_empty() {
        return Ok(0.0);
    }
    let bins: Vec<usize> = values.iter().map(|&v| bin_of(&cuts, v)).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let table = ContingencyTable::from_assignments(&bins, labels, cuts.len() + 1, n_classes)?;
    information_gain_binned(&table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub gain_bits: f64,
}

/// Relevant features, descending gain, ties by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceRanking {
    pub entries: Vec<RankedFeature>,
}

impl RelevanceRanking {
    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranking serializes")
    }
}

/// Rank every column of `m` by MDLP information gain against the class
/// labels keyed by row id; zero-gain features are left out.
pub fn rank_relevant(m: &FeatureMatrix, labels: &BTreeMap<String, usize>) -> Result<RelevanceRanking, SelectionError> {
    if labels.len() != m.len() {
        return Err(SelectionError::LabelCount { labels: labels.len(), rows: m.len() });
    }
    let y: Vec<usize> = m
        .ids()
        .map(|id| labels.get(id).copied().ok_or_else(|| SelectionError::MissingLabel(id.into())))
        .collect::<Result<_, _>>()?;
    let rows: Vec<&[f32]> = m.rows().map(|(_, r)| r).collect();
    let gains: Vec<f64> = (0..m.width())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| f64::from(r[j])).collect();
            feature_gain(&col, &y)
        })
        .collect::<Result<_, _>>()?;
    let mut entries: Vec<RankedFeature> = m
        .feature_names
        .iter()
        .zip(gains)
        .filter(|(_, g)| *g > 0.0)
        .map(|(f, g)| RankedFeature { feature: f.clone(), gain_bits: g })
        .collect();
    entries.sort_by(|a, b| b.gain_bits.total_cmp(&a.gain_bits).then_with(|| a.feature.cmp(&b.feature)));
    Ok(RelevanceRanking { entries })
}
