//! Dual-channel labeled conversations and dataset manifests.
//!
//! A conversation document carries one utterance stream per recording
//! channel (customer and agent), optional CRM labels, and its split
//! assignment. Anonymization placeholders such as `<NAME>` are ordinary
//! tokens here.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{id}: malformed document: {message}")]
    Malformed { id: String, message: String },
    #[error("{id}: {channel} utterance {index}: start {start} must be finite and >= 0")]
    BadStart { id: String, channel: Channel, index: usize, start: f64 },
    #[error("{id}: {channel} utterance {index}: end {end} must be greater than start {start}")]
    BadInterval { id: String, channel: Channel, index: usize, start: f64, end: f64 },
    #[error("{id}: {channel} utterance {index}: empty text")]
    EmptyText { id: String, channel: Channel, index: usize },
    #[error("{id}: overlapping utterances within channel {channel} (utterance {index} starts at {start} before previous end {prev_end})")]
    Overlap { id: String, channel: Channel, index: usize, start: f64, prev_end: f64 },
    #[error("{id}: no utterances on either channel")]
    NoUtterances { id: String },
    #[error("{id}: unknown label {value} for field {field}")]
    UnknownLabel { id: String, field: &'static str, value: String },
    #[error("{id}: missing {task} label")]
    MissingLabel { id: String, task: Task },
    #[error("manifest {path}: duplicate id {id}")]
    DuplicateId { path: PathBuf, id: String },
    #[error("manifest {path}: entry {id} references missing file {file}")]
    MissingFile { path: PathBuf, id: String, file: PathBuf },
    #[error("{file}: document id {found} does not match manifest id {expected}")]
    IdMismatch { file: PathBuf, expected: String, found: String },
    #[error("{id}: manifest split {manifest} disagrees with document split {document}")]
    SplitMismatch { id: String, manifest: Split, document: Split },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CorpusError {
    /// Whether the failure comes from the content of the data (as opposed
    /// to the environment, e.g. an unreadable file).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, CorpusError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Customer,
    Agent,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Customer => "customer",
            Channel::Agent => "agent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Devel,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "devel" => Some(Split::Devel),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Devel => "devel",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestLabel {
    Process,
    Member,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplaintLabel {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Labels {
    pub request: Option<RequestLabel>,
    pub complaint: Option<ComplaintLabel>,
}

/// The two binary prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Request,
    Complaint,
}

impl Task {
    /// Class names in a fixed order; the first one is the positive class.
    pub fn classes(&self) -> [&'static str; 2] {
        match self {
            Task::Request => ["process", "member"],
            Task::Complaint => ["yes", "no"],
        }
    }

    pub fn positive_label(&self) -> &'static str {
        self.classes()[0]
    }

    /// Label of `conv` for this task as a class name, if annotated.
    pub fn label_of(&self, conv: &Conversation) -> Option<&'static str> {
        match self {
            Task::Request => conv.labels.request.map(|l| match l {
                RequestLabel::Process => "process",
                RequestLabel::Member => "member",
            }),
            Task::Complaint => conv.labels.complaint.map(|l| match l {
                ComplaintLabel::Yes => "yes",
                ComplaintLabel::No => "no",
            }),
        }
    }

    /// `true` when the conversation belongs to the positive class.
    pub fn is_positive(&self, conv: &Conversation) -> Result<bool, CorpusError> {
        self.label_of(conv)
            .map(|l| l == self.positive_label())
            .ok_or_else(|| CorpusError::MissingLabel { id: conv.id.clone(), task: *self })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Request => "request",
            Task::Complaint => "complaint",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "request" => Ok(Task::Request),
            "complaint" => Ok(Task::Complaint),
            other => Err(format!("unknown task {other:?} (expected request or complaint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

impl Utterance {
    pub fn span(&self) -> (f64, f64) {
        (self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub customer: Vec<Utterance>,
    pub agent: Vec<Utterance>,
    pub labels: Labels,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenScope {
    Customer,
    Agent,
    Whole,
}

impl Conversation {
    pub fn channel(&self, channel: Channel) -> &[Utterance] {
        match channel {
            Channel::Customer => &self.customer,
            Channel::Agent => &self.agent,
        }
    }

    /// Serialize to the canonical document schema.
    pub fn to_json(&self) -> String {
        let doc = RawConversationOut {
            id: &self.id,
            labels: RawLabelsOut {
                request: self.labels.request,
                complaint: self.labels.complaint.map(|c| c == ComplaintLabel::Yes),
            },
            split: self.split,
            channels: RawChannelsOut { customer: &self.customer, agent: &self.agent },
        };
        serde_json::to_string_pretty(&doc).expect("conversation serialization cannot fail")
    }
}

#[derive(Serialize)]
struct RawConversationOut<'a> {
    id: &'a str,
    labels: RawLabelsOut,
    split: Split,
    channels: RawChannelsOut<'a>,
}

#[derive(Serialize)]
struct RawLabelsOut {
    request: Option<RequestLabel>,
    complaint: Option<bool>,
}

#[derive(Serialize)]
struct RawChannelsOut<'a> {
    customer: &'a [Utterance],
    agent: &'a [Utterance],
}

#[derive(Deserialize)]
struct RawConversation {
    id: String,
    #[serde(default)]
    labels: RawLabels,
    split: String,
    channels: RawChannels,
}

#[derive(Deserialize, Default)]
struct RawLabels {
    #[serde(default)]
    request: Value,
    #[serde(default)]
    complaint: Value,
}

#[derive(Deserialize)]
struct RawChannels {
    #[serde(default)]
    customer: Vec<Utterance>,
    #[serde(default)]
    agent: Vec<Utterance>,
}

/// Parse and validate one conversation document.
pub fn parse_conversation(bytes: &[u8]) -> Result<Conversation, CorpusError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CorpusError::Malformed {
        id: "<unknown>".into(),
        message: e.to_string(),
    })?;
    let id = value
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or("<unknown>")
        .to_string();
    let raw: RawConversation = serde_json::from_value(value)
        .map_err(|e| CorpusError::Malformed { id: id.clone(), message: e.to_string() })?;

    let split = Split::parse(&raw.split).ok_or_else(|| CorpusError::UnknownLabel {
        id: id.clone(),
        field: "split",
        value: raw.split.clone(),
    })?;
    let request = match &raw.labels.request {
        Value::Null => None,
        Value::String(s) if s == "process" => Some(RequestLabel::Process),
        Value::String(s) if s == "member" => Some(RequestLabel::Member),
        other => {
            return Err(CorpusError::UnknownLabel {
                id,
                field: "labels.request",
                value: other.to_string(),
            })
        }
    };
    let complaint = match &raw.labels.complaint {
        Value::Null => None,
        Value::Bool(true) => Some(ComplaintLabel::Yes),
        Value::Bool(false) => Some(ComplaintLabel::No),
        Value::String(s) if s == "yes" => Some(ComplaintLabel::Yes),
        Value::String(s) if s == "no" => Some(ComplaintLabel::No),
        other => {
            return Err(CorpusError::UnknownLabel {
                id,
                field: "labels.complaint",
                value: other.to_string(),
            })
        }
    };

    let customer = validate_channel(&id, Channel::Customer, raw.channels.customer)?;
    let agent = validate_channel(&id, Channel::Agent, raw.channels.agent)?;
    if customer.is_empty() && agent.is_empty() {
        return Err(CorpusError::NoUtterances { id });
    }
    Ok(Conversation { id: raw.id, customer, agent, labels: Labels { request, complaint }, split })
}

fn validate_channel(
    id: &str,
    channel: Channel,
    mut utterances: Vec<Utterance>,
) -> Result<Vec<Utterance>, CorpusError> {
    for (index, u) in utterances.iter().enumerate() {
        if !(u.start.is_finite() && u.start >= 0.0) {
            return Err(CorpusError::BadStart { id: id.into(), channel, index, start: u.start });
        }
        if !(u.end.is_finite() && u.end > u.start) {
            return Err(CorpusError::BadInterval {
                id: id.into(),
                channel,
                index,
                start: u.start,
                end: u.end,
            });
        }
        if u.text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id: id.into(), channel, index });
        }
    }
    utterances.sort_by(|a, b| a.start.total_cmp(&b.start));
    for (index, pair) in utterances.windows(2).enumerate() {
        if pair[1].start < pair[0].end {
            return Err(CorpusError::Overlap {
                id: id.into(),
                channel,
                index: index + 1,
                start: pair[1].start,
                prev_end: pair[0].end,
            });
        }
    }
    Ok(utterances)
}

/// Whitespace tokens of the requested scope in temporal order. For
/// [`TokenScope::Whole`] the channels are interleaved by utterance start,
/// customer first on ties.
pub fn channel_tokens(conv: &Conversation, scope: TokenScope) -> Vec<&str> {
    let utterances: Vec<&Utterance> = match scope {
        TokenScope::Customer => conv.customer.iter().collect(),
        TokenScope::Agent => conv.agent.iter().collect(),
        TokenScope::Whole => {
            let mut merged = Vec::with_capacity(conv.customer.len() + conv.agent.len());
            let (mut i, mut j) = (0, 0);
            while i < conv.customer.len() || j < conv.agent.len() {
                let take_customer = match (conv.customer.get(i), conv.agent.get(j)) {
                    (Some(c), Some(a)) => c.start <= a.start,
                    (Some(_), None) => true,
                    _ => false,
                };
                if take_customer {
                    merged.push(&conv.customer[i]);
                    i += 1;
                } else {
                    merged.push(&conv.agent[j]);
                    j += 1;
                }
            }
            merged
        }
    };
    utterances.into_iter().flat_map(|u| u.text.split_whitespace()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub split: Split,
}

/// A list of conversation files with their split assignment. Conversations
/// are loaded on demand.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

/// Label tallies for one split; `unlabeled` counts entries without a label
/// for the task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub by_label: BTreeMap<String, usize>,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.by_label.values().sum::<usize>() + self.unlabeled
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let entries: Vec<ManifestEntry> = serde_json::from_slice(&bytes).map_err(|e| {
        CorpusError::Malformed { id: path.display().to_string(), message: e.to_string() }
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.id.as_str()) {
            return Err(CorpusError::DuplicateId { path: path.into(), id: e.id.clone() });
        }
        let file = base_dir.join(&e.path);
        if !file.is_file() {
            return Err(CorpusError::MissingFile { path: path.into(), id: e.id.clone(), file });
        }
    }
    Ok(Manifest { path: path.into(), entries, base_dir })
}

/// Write a manifest; entry paths are stored as given (relative paths are
/// resolved against the manifest's directory when loading).
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(entries).expect("manifest serialization cannot fail");
    fs::write(path, json).map_err(|source| CorpusError::Io { path: path.into(), source })
}

impl Manifest {
    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.split).or_insert(0) += 1;
        }
        counts
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<Conversation, CorpusError> {
        let file = self.resolve(entry);
        let bytes = fs::read(&file).map_err(|source| CorpusError::Io { path: file.clone(), source })?;
        let conv = parse_conversation(&bytes)?;
        if conv.id != entry.id {
            return Err(CorpusError::IdMismatch { file, expected: entry.id.clone(), found: conv.id });
        }
        if conv.split != entry.split {
            return Err(CorpusError::SplitMismatch {
                id: conv.id,
                manifest: entry.split,
                document: conv.split,
            });
        }
        Ok(conv)
    }

    /// Load every conversation in manifest order (parsed in parallel).
    pub fn load_all(&self) -> Result<Vec<Conversation>, CorpusError> {
        self.entries.par_iter().map(|e| self.load(e)).collect()
    }

    pub fn label_counts(&self, task: Task) -> Result<BTreeMap<Split, LabelCounts>, CorpusError> {
        let mut counts: BTreeMap<Split, LabelCounts> = BTreeMap::new();
        for conv in self.load_all()? {
            let slot = counts.entry(conv.split).or_default();
            match task.label_of(&conv) {
                Some(l) => *slot.by_label.entry(l.to_string()).or_insert(0) += 1,
                None => slot.unlabeled += 1,
            }
        }
        Ok(counts)
    }
}
