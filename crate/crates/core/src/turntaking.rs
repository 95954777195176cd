//! Talkspurts, timeline segmentation into the eight turn-taking segment
//! types, and the 64 vocal-interaction statistics computed over them.
//!
//! Segment types:
//!
//! | type | state                                                  |
//! |------|--------------------------------------------------------|
//! | S1   | customer speaks alone                                  |
//! | S2   | agent speaks alone                                     |
//! | S3   | overlap, the agent started while the customer spoke    |
//! | S4   | overlap, the customer started while the agent spoke    |
//! | S5   | switching pause, agent stopped and customer starts     |
//! | S6   | switching pause, customer stopped and agent starts     |
//! | S7   | customer pause (customer stops, then resumes)          |
//! | S8   | agent pause (agent stops, then resumes)                |
//!
//! Ties are resolved deterministically: after a simultaneous stop the
//! speaker whose talkspurt started earlier held the floor last, and on a
//! simultaneous start the customer is taken to start first.

use std::fmt;
use std::sync::LazyLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Channel, Conversation};
use crate::features::FeatureMatrix;
use crate::stats::Moments;

pub const DEFAULT_MERGE_GAP: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum TurnTakingError {
    #[error("no talkspurts on either channel")]
    NoSpeech,
    #[error("empty segment sequence")]
    EmptySequence,
    #[error("unknown feature name {0:?}")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Talkspurt {
    pub start: f64,
    pub end: f64,
    pub channel: Channel,
}

/// Merge one channel's sorted, non-overlapping speech intervals into
/// talkspurts. Intervals separated by less than `merge_gap` (or touching)
/// are joined.
pub fn build_talkspurts<I>(intervals: I, channel: Channel, merge_gap: f64) -> Vec<Talkspurt>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut out: Vec<Talkspurt> = Vec::new();
    for (start, end) in intervals {
        match out.last_mut() {
            Some(last) if start - last.end < merge_gap || start <= last.end => {
                last.end = last.end.max(end);
            }
            _ => out.push(Talkspurt { start, end, channel }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegmentType {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
}

impl SegmentType {
    pub const ALL: [SegmentType; 8] = [
        SegmentType::S1,
        SegmentType::S2,
        SegmentType::S3,
        SegmentType::S4,
        SegmentType::S5,
        SegmentType::S6,
        SegmentType::S7,
        SegmentType::S8,
    ];

    /// 1-based type number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        Self::ALL.get(n.checked_sub(1)?).copied()
    }

    /// S1..S4 are speech states, S5..S8 silences.
    pub fn is_speech(self) -> bool {
        self.number() <= 4
    }

    /// Which channels are active during a segment of this type.
    pub fn active(self) -> (bool, bool) {
        match self {
            SegmentType::S1 => (true, false),
            SegmentType::S2 => (false, true),
            SegmentType::S3 | SegmentType::S4 => (true, true),
            _ => (false, false),
        }
    }

    /// Allowed successors. Besides the reconstructed dialogue diagram this
    /// includes direct hand-offs S1->S2 and S2->S1, which occur when one
    /// speaker stops exactly when the other starts.
    pub fn successors(self) -> &'static [SegmentType] {
        use SegmentType::*;
        match self {
            S1 => &[S2, S3, S6, S7],
            S2 => &[S1, S4, S5, S8],
            S3 | S4 => &[S1, S2, S5, S6, S7, S8],
            S5 | S7 => &[S1, S3],
            S6 | S8 => &[S2],
        }
    }

    pub fn can_precede(self, next: SegmentType) -> bool {
        self.successors().contains(&next)
    }
}

impl fmt::Display for SegmentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "type")]
    pub kind: SegmentType,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Contiguous labeled timeline of one conversation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentSequence {
    pub conversation_id: String,
    pub segments: Vec<Segment>,
}

impl SegmentSequence {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Export as `[{"type":"S1","start":..,"end":..},...]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.segments).expect("segment serialization cannot fail")
    }

    /// Check contiguity, positive durations, speech at both ends and the
    /// successor table. Returns the index of the first offending segment.
    pub fn validate(&self) -> Result<(), usize> {
        let segs = &self.segments;
        if segs.is_empty() {
            return Ok(());
        }
        for (i, s) in segs.iter().enumerate() {
            if s.end <= s.start {
                return Err(i);
            }
        }
        if !segs[0].kind.is_speech() {
            return Err(0);
        }
        if !segs[segs.len() - 1].kind.is_speech() {
            return Err(segs.len() - 1);
        }
        for (i, w) in segs.windows(2).enumerate() {
            if w[0].end != w[1].start || !w[0].kind.can_precede(w[1].kind) {
                return Err(i + 1);
            }
        }
        Ok(())
    }
}

/// Collapse touching or overlapping talkspurts of one channel.
fn normalize(spurts: &[Talkspurt]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = spurts.iter().map(|t| (t.start, t.end)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Start time of the interval of `spurts` covering `[t0, t1)`, advancing
/// the cursor monotonically.
fn active_start(spurts: &[(f64, f64)], cursor: &mut usize, t0: f64) -> Option<f64> {
    while *cursor < spurts.len() && spurts[*cursor].1 <= t0 {
        *cursor += 1;
    }
    spurts.get(*cursor).filter(|&&(s, _)| s <= t0).map(|&(s, _)| s)
}

/// Label the timeline spanned by the two channels' talkspurts.
///
/// The sweep visits every elementary interval between consecutive boundary
/// events, labels it from the speaking state, and merges equal neighbours.
/// Leading and trailing silence is never produced because the sweep spans
/// exactly from the first talkspurt start to the last talkspurt end.
pub fn label_segments(
    customer: &[Talkspurt],
    agent: &[Talkspurt],
) -> Result<SegmentSequence, TurnTakingError> {
    let cust = normalize(customer);
    let agt = normalize(agent);
    if cust.is_empty() && agt.is_empty() {
        return Err(TurnTakingError::NoSpeech);
    }

    let mut times: Vec<f64> = cust.iter().chain(agt.iter()).flat_map(|&(s, e)| [s, e]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    // (t0, t1, customer start, agent start) for every elementary interval.
    let mut cells = Vec::with_capacity(times.len());
    let (mut ci, mut ai) = (0, 0);
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let c = active_start(&cust, &mut ci, t0);
        let a = active_start(&agt, &mut ai, t0);
        cells.push((t0, t1, c, a));
    }

    let mut segments: Vec<Segment> = Vec::with_capacity(cells.len());
    for (i, &(t0, t1, c, a)) in cells.iter().enumerate() {
        let kind = match (c, a) {
            (Some(_), None) => SegmentType::S1,
            (None, Some(_)) => SegmentType::S2,
            (Some(cs), Some(as_)) => {
                if cs > as_ {
                    SegmentType::S4
                } else {
                    SegmentType::S3
                }
            }
            (None, None) => {
                // Interior silence: both neighbours are speech cells.
                let (_, _, pc, pa) = cells[i - 1];
                let (_, _, nc, _) = cells[i + 1];
                let prev_customer = match (pc, pa) {
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    // Simultaneous stop: earlier starter is the floor holder.
                    (Some(cs), Some(as_)) => cs <= as_,
                    (None, None) => unreachable!("adjacent silences are one cell"),
                };
                // Simultaneous start counts as the customer starting first.
                let next_customer = nc.is_some();
                match (prev_customer, next_customer) {
                    (false, true) => SegmentType::S5,
                    (true, false) => SegmentType::S6,
                    (true, true) => SegmentType::S7,
                    (false, false) => SegmentType::S8,
                }
            }
        };
        match segments.last_mut() {
            Some(last) if last.kind == kind => last.end = t1,
            _ => segments.push(Segment { kind, start: t0, end: t1 }),
        }
    }
    Ok(SegmentSequence { conversation_id: String::new(), segments })
}

/// Talkspurts for both channels of a conversation and their segmentation.
pub fn segment_conversation(
    conv: &Conversation,
    merge_gap: f64,
) -> Result<SegmentSequence, TurnTakingError> {
    let customer = build_talkspurts(conv.customer.iter().map(|u| u.span()), Channel::Customer, merge_gap);
    let agent = build_talkspurts(conv.agent.iter().map(|u| u.span()), Channel::Agent, merge_gap);
    let mut seq = label_segments(&customer, &agent)?;
    seq.conversation_id = conv.id.clone();
    Ok(seq)
}

pub const TT_DIM: usize = 64;

const STAT_PREFIXES: [&str; 8] = ["Min", "Max", "Mean", "Sd", "K", "Sk", "T", "N"];

static TT_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    STAT_PREFIXES
        .iter()
        .flat_map(|p| (1..=8).map(move |t| format!("{p}{t}")))
        .collect()
});

/// Feature names in storage order: Min1..Min8, Max1..Max8, Mean, Sd, K, Sk,
/// then T1..T8 and N1..N8.
pub fn tt_feature_names() -> &'static [String] {
    &TT_NAMES
}

/// The six-feature subset kept for the complaint task, in relevance order.
pub const TTC_NAMES: [&str; 6] = ["T7", "Max7", "Sk5", "K5", "Mean7", "Mean5"];

#[derive(Debug, Clone, PartialEq)]
pub struct TtFeatureVector {
    values: [f64; TT_DIM],
}

impl TtFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &'static [String] {
        tt_feature_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        tt_index(name).map(|i| self.values[i])
    }

    /// Value of statistic `prefix` (e.g. `"Mean"`) for segment type `t`.
    pub fn stat(&self, prefix: &str, t: SegmentType) -> Option<f64> {
        let row = STAT_PREFIXES.iter().position(|p| *p == prefix)?;
        Some(self.values[row * 8 + t.number() - 1])
    }
}

pub fn tt_index(name: &str) -> Option<usize> {
    TT_NAMES.iter().position(|n| n == name)
}

/// Duration statistics per segment type plus duration and count shares.
pub fn tt_features(seq: &SegmentSequence) -> Result<TtFeatureVector, TurnTakingError> {
    if seq.is_empty() {
        return Err(TurnTakingError::EmptySequence);
    }
    let mut durations: [Vec<f64>; 8] = Default::default();
    for s in &seq.segments {
        durations[s.kind.number() - 1].push(s.duration());
    }
    let total_duration: f64 = durations.iter().flatten().sum();
    let total_count = seq.len() as f64;

    let mut values = [0.0; TT_DIM];
    for (t, d) in durations.iter().enumerate() {
        if d.is_empty() {
            continue;
        }
        let m = Moments::from_slice(d);
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let stats = [
            min,
            max,
            m.mean,
            m.std_dev(),
            m.excess_kurtosis(),
            m.skewness(),
            d.iter().sum::<f64>() / total_duration,
            d.len() as f64 / total_count,
        ];
        for (row, v) in stats.into_iter().enumerate() {
            values[row * 8 + t] = v;
        }
    }
    Ok(TtFeatureVector { values })
}

/// Pick named entries in the requested order.
pub fn select_named<S: AsRef<str>>(
    vec: &TtFeatureVector,
    names: &[S],
) -> Result<Vec<f64>, TurnTakingError> {
    names
        .iter()
        .map(|n| vec.get(n.as_ref()).ok_or_else(|| TurnTakingError::UnknownFeature(n.as_ref().into())))
        .collect()
}

/// TT vectors for a batch of conversations as a feature matrix named `TT`.
pub fn tt_feature_matrix(
    convs: &[Conversation],
    merge_gap: f64,
) -> Result<FeatureMatrix, TurnTakingError> {
    let rows: Vec<(String, Vec<f32>)> = convs
        .par_iter()
        .map(|c| {
            let seq = segment_conversation(c, merge_gap)?;
            let v = tt_features(&seq)?;
            Ok((c.id.clone(), v.values().iter().map(|&x| x as f32).collect()))
        })
        .collect::<Result<_, TurnTakingError>>()?;
    let mut m = FeatureMatrix::new("TT", tt_feature_names().to_vec());
    for (id, row) in rows {
        m.push_row(id, row).expect("TT rows are finite, 64 wide and uniquely named");
    }
    Ok(m)
}
