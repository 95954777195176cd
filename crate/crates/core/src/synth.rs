//! Markov-chain generator of labeled dual-channel conversations.
//!
//! A profile walks the segment-type chain, draws a log-normal duration for
//! each segment and rebuilds the two channels' talkspurts from the speaking
//! state each segment implies. Segmenting the generated talkspurts gives
//! back the walked sequence exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    load_manifest, write_manifest, Channel, ComplaintLabel, Conversation, CorpusError, Labels, Manifest,
    ManifestEntry, RequestLabel, Split, Utterance,
};
use crate::turntaking::{Segment, SegmentSequence, SegmentType, Talkspurt};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("profile {profile}: {message}")]
    InvalidProfile { profile: String, message: String },
    #[error("dataset config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

/// Transitions the generator may take. A simultaneous stop after an overlap
/// hands the floor to the earlier starter, so S3 cannot be followed by S5 or
/// S8, nor S4 by S6 or S7.
pub fn realizable_successors(t: SegmentType) -> &'static [SegmentType] {
    use SegmentType::*;
    match t {
        S1 => &[S3, S6, S7],
        S2 => &[S4, S5, S8],
        S3 => &[S1, S2, S6, S7],
        S4 => &[S1, S2, S5, S8],
        S5 | S7 => &[S1, S3],
        S6 | S8 => &[S2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    /// Mean of the log-duration (log-seconds).
    pub mu: f64,
    /// Standard deviation of the log-duration.
    pub sigma: f64,
}

impl LogNormalSpec {
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileLabels {
    #[serde(default)]
    pub request: Option<RequestLabel>,
    #[serde(default)]
    pub complaint: Option<bool>,
}

impl From<ProfileLabels> for Labels {
    fn from(p: ProfileLabels) -> Self {
        Labels {
            request: p.request,
            complaint: p.complaint.map(|c| if c { ComplaintLabel::Yes } else { ComplaintLabel::No }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    /// Probability that the customer speaks first.
    pub initial_customer: f64,
    pub transitions: BTreeMap<SegmentType, BTreeMap<SegmentType, f64>>,
    /// Log-normal part of each segment's duration.
    pub durations: BTreeMap<SegmentType, LogNormalSpec>,
    /// Constant added to every sampled duration; keep it at or above the
    /// talkspurt merge gap so generated pauses survive merging.
    pub min_duration: f64,
    /// Generation stops at the first speech segment ending past this time.
    pub target_duration: f64,
    #[serde(default)]
    pub labels: ProfileLabels,
}

impl Profile {
    /// A plausible call-center dialogue: long single-speaker stretches,
    /// short overlaps, sub-second switching and within-speaker pauses.
    pub fn baseline(name: impl Into<String>) -> Self {
        use SegmentType::*;
        let row = |v: &[(SegmentType, f64)]| v.iter().copied().collect::<BTreeMap<_, _>>();
        let transitions = BTreeMap::from([
            (S1, row(&[(S3, 0.15), (S6, 0.6), (S7, 0.25)])),
            (S2, row(&[(S4, 0.15), (S5, 0.6), (S8, 0.25)])),
            (S3, row(&[(S1, 0.3), (S2, 0.5), (S6, 0.1), (S7, 0.1)])),
            (S4, row(&[(S1, 0.5), (S2, 0.3), (S5, 0.1), (S8, 0.1)])),
            (S5, row(&[(S1, 0.9), (S3, 0.1)])),
            (S6, row(&[(S2, 1.0)])),
            (S7, row(&[(S1, 0.9), (S3, 0.1)])),
            (S8, row(&[(S2, 1.0)])),
        ]);
        let ln = |mean: f64, sigma: f64| LogNormalSpec { mu: mean.ln(), sigma };
        let durations = BTreeMap::from([
            (S1, ln(2.5, 0.6)),
            (S2, ln(3.0, 0.6)),
            (S3, ln(0.4, 0.5)),
            (S4, ln(0.4, 0.5)),
            (S5, ln(0.5, 0.5)),
            (S6, ln(0.5, 0.5)),
            (S7, ln(0.6, 0.5)),
            (S8, ln(0.6, 0.5)),
        ]);
        Self {
            name: name.into(),
            initial_customer: 0.3,
            transitions,
            durations,
            min_duration: 0.25,
            target_duration: 300.0,
            labels: ProfileLabels::default(),
        }
    }

    pub fn with_labels(mut self, labels: ProfileLabels) -> Self {
        self.labels = labels;
        self
    }

    /// Multiply the mean of the log-normal part of `kind` by `factor`.
    pub fn scale_duration(mut self, kind: SegmentType, factor: f64) -> Self {
        if let Some(d) = self.durations.get_mut(&kind) {
            d.mu += factor.ln();
        }
        self
    }

    /// Change the log-spread of `kind` while keeping its mean fixed.
    pub fn reshape_duration(mut self, kind: SegmentType, sigma: f64) -> Self {
        if let Some(d) = self.durations.get_mut(&kind) {
            d.mu += 0.5 * (d.sigma * d.sigma - sigma * sigma);
            d.sigma = sigma;
        }
        self
    }

    /// Expected duration of one segment of `kind`.
    pub fn expected_duration(&self, kind: SegmentType) -> f64 {
        self.min_duration + self.durations[&kind].mean()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |message: String| SynthError::InvalidProfile { profile: self.name.clone(), message };
        if !(0.0..=1.0).contains(&self.initial_customer) {
            return Err(bad(format!("initial_customer {} outside [0, 1]", self.initial_customer)));
        }
        if !(self.target_duration > 0.0 && self.target_duration.is_finite()) {
            return Err(bad("target_duration must be positive".into()));
        }
        if !(self.min_duration >= 0.0 && self.min_duration.is_finite()) {
            return Err(bad("min_duration must be >= 0".into()));
        }
        for t in SegmentType::ALL {
            let row = self.transitions.get(&t).ok_or_else(|| bad(format!("no transition row for {t}")))?;
            let allowed = realizable_successors(t);
            for (next, p) in row {
                if !(*p >= 0.0 && p.is_finite()) {
                    return Err(bad(format!("{t}->{next}: invalid probability {p}")));
                }
                if *p > 0.0 && !allowed.contains(next) {
                    return Err(bad(format!("{t}->{next} is not an allowed transition")));
                }
            }
            let sum: f64 = row.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("row {t} sums to {sum}")));
            }
            let d = self.durations.get(&t).ok_or_else(|| bad(format!("no duration for {t}")))?;
            if !(d.sigma > 0.0 && d.sigma.is_finite() && d.mu.is_finite()) {
                return Err(bad(format!("{t}: sigma must be positive")));
            }
        }
        Ok(())
    }
}

/// Output of one chain walk.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedConversation {
    pub segments: SegmentSequence,
    pub customer: Vec<Talkspurt>,
    pub agent: Vec<Talkspurt>,
    pub labels: Labels,
}

fn sample_next(row: &BTreeMap<SegmentType, f64>, rng: &mut impl Rng) -> SegmentType {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (&t, &p) in row {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(t);
        if u < acc {
            return t;
        }
    }
    last.expect("validated row has positive mass")
}

/// Walk the chain of `profile` with a generator seeded from `seed`.
pub fn generate_conversation(profile: &Profile, seed: u64) -> Result<GeneratedConversation, SynthError> {
    generate_with_rng(profile, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn generate_with_rng(profile: &Profile, rng: &mut ChaCha8Rng) -> Result<GeneratedConversation, SynthError> {
    profile.validate()?;
    let samplers: BTreeMap<SegmentType, LogNormal<f64>> = profile
        .durations
        .iter()
        .map(|(&t, d)| (t, LogNormal::new(d.mu, d.sigma).expect("validated log-normal")))
        .collect();

    let mut kind = if rng.random::<f64>() < profile.initial_customer { SegmentType::S1 } else { SegmentType::S2 };
    let mut t = 0.0;
    let mut segments = Vec::new();
    loop {
        let d = profile.min_duration + samplers[&kind].sample(rng);
        let end = t + d;
        segments.push(Segment { kind, start: t, end });
        t = end;
        if t >= profile.target_duration && kind.is_speech() {
            break;
        }
        kind = sample_next(&profile.transitions[&kind], rng);
    }

    let (customer, agent) = talkspurts_from_segments(&segments);
    Ok(GeneratedConversation {
        segments: SegmentSequence { conversation_id: String::new(), segments },
        customer,
        agent,
        labels: profile.labels.into(),
    })
}

/// Rebuild per-channel talkspurts from a labeled timeline.
pub fn talkspurts_from_segments(segments: &[Segment]) -> (Vec<Talkspurt>, Vec<Talkspurt>) {
    let mut customer = Vec::new();
    let mut agent = Vec::new();
    let mut open: [Option<f64>; 2] = [None, None];
    let mut close = |slot: usize, start: f64, end: f64| {
        let (list, channel) = if slot == 0 { (&mut customer, Channel::Customer) } else { (&mut agent, Channel::Agent) };
        list.push(Talkspurt { start, end, channel });
    };
    for seg in segments {
        let (c, a) = seg.kind.active();
        for (slot, on) in [(0, c), (1, a)] {
            match (open[slot], on) {
                (None, true) => open[slot] = Some(seg.start),
                (Some(s), false) => {
                    close(slot, s, seg.start);
                    open[slot] = None;
                }
                _ => {}
            }
        }
    }
    let end = segments.last().map_or(0.0, |s| s.end);
    for (slot, s) in open.into_iter().enumerate() {
        if let Some(s) = s {
            close(slot, s, end);
        }
    }
    (customer, agent)
}

impl GeneratedConversation {
    /// Materialize as a corpus conversation, one utterance per talkspurt
    /// with `words_per_second` placeholder tokens (at least one).
    pub fn to_conversation(&self, id: impl Into<String>, split: Split, words_per_second: f64) -> Conversation {
        let mut counter = 0usize;
        let mut utterances = |spurts: &[Talkspurt]| -> Vec<Utterance> {
            spurts
                .iter()
                .map(|t| {
                    let words = (((t.end - t.start) * words_per_second).round() as usize).max(1);
                    let text = (0..words)
                        .map(|_| {
                            counter += 1;
                            format!("w{counter}")
                        })
                        .collect::<Vec<_>>()
                        .join(" ");
                    Utterance { start: t.start, end: t.end, text }
                })
                .collect()
        };
        let customer = utterances(&self.customer);
        let agent = utterances(&self.agent);
        Conversation { id: id.into(), customer, agent, labels: self.labels, split }
    }
}

fn default_train_fraction() -> f64 {
    0.5
}

fn default_words_per_second() -> f64 {
    2.5
}

fn default_prefix() -> String {
    "syn".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub profile: Profile,
}

/// Dataset generation config (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub mixture: Vec<MixtureComponent>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_words_per_second")]
    pub words_per_second: f64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

impl DatasetConfig {
    pub fn new(n: usize, mixture: Vec<(f64, Profile)>) -> Self {
        Self {
            n,
            mixture: mixture.into_iter().map(|(weight, profile)| MixtureComponent { weight, profile }).collect(),
            train_fraction: default_train_fraction(),
            words_per_second: default_words_per_second(),
            id_prefix: default_prefix(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n < 2 {
            return Err(SynthError::InvalidConfig(format!("n must be >= 2, got {}", self.n)));
        }
        if self.mixture.is_empty() {
            return Err(SynthError::InvalidConfig("empty mixture".into()));
        }
        if self.mixture.iter().any(|m| m.weight.is_nan() || m.weight < 0.0) {
            return Err(SynthError::InvalidConfig("negative mixture weight".into()));
        }
        let sum: f64 = self.mixture.iter().map(|m| m.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidConfig(format!("mixture weights sum to {sum}")));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(SynthError::InvalidConfig("train_fraction outside [0, 1]".into()));
        }
        for m in &self.mixture {
            m.profile.validate()?;
        }
        Ok(())
    }

    /// Conversations per component by largest remainder, so counts are
    /// exact and sum to `n`.
    pub fn component_counts(&self) -> Vec<usize> {
        let raw: Vec<f64> = self.mixture.iter().map(|m| m.weight * self.n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut rest: Vec<(usize, f64)> = raw.iter().enumerate().map(|(i, r)| (i, r - r.floor())).collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let missing = self.n - counts.iter().sum::<usize>();
        for &(i, _) in rest.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }

    /// Conversation plan: (component, split) per index, stratified by
    /// component.
    pub fn plan(&self) -> Vec<(usize, Split)> {
        let mut plan = Vec::with_capacity(self.n);
        for (c, &count) in self.component_counts().iter().enumerate() {
            let f = self.train_fraction;
            for j in 0..count {
                let train = ((j + 1) as f64 * f).floor() > (j as f64 * f).floor();
                plan.push((c, if train { Split::Train } else { Split::Devel }));
            }
        }
        plan
    }
}

/// Two equally weighted profiles that differ only in the mean duration of
/// S5 and S7 pauses, longer by `factor` in the positive profile (labeled
/// complaint = yes, request = process).
pub fn pause_contrast_config(n: usize, factor: f64) -> DatasetConfig {
    let control = Profile::baseline("control")
        .with_labels(ProfileLabels { request: Some(RequestLabel::Member), complaint: Some(false) });
    let slow = Profile::baseline("slow-pauses")
        .scale_duration(SegmentType::S5, factor)
        .scale_duration(SegmentType::S7, factor)
        .with_labels(ProfileLabels { request: Some(RequestLabel::Process), complaint: Some(true) });
    DatasetConfig::new(n, vec![(0.5, slow), (0.5, control)])
}

/// Generate all conversations in memory. Conversation `i` uses ChaCha
/// stream `i` of `seed`.
pub fn generate_conversations(config: &DatasetConfig, seed: u64) -> Result<Vec<Conversation>, SynthError> {
    config.validate()?;
    let width = config.n.to_string().len().max(5);
    config
        .plan()
        .into_par_iter()
        .enumerate()
        .map(|(i, (component, split))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let g = generate_with_rng(&config.mixture[component].profile, &mut rng)?;
            let id = format!("{}{:0width$}", config.id_prefix, i);
            Ok(g.to_conversation(id, split, config.words_per_second))
        })
        .collect()
}

/// Write conversations under `out_dir/conversations/` plus
/// `out_dir/manifest.json`, and load the manifest back.
pub fn generate_dataset(config: &DatasetConfig, out_dir: impl AsRef<Path>, seed: u64) -> Result<Manifest, SynthError> {
    let out_dir = out_dir.as_ref();
    let convs = generate_conversations(config, seed)?;
    let conv_dir = out_dir.join("conversations");
    fs::create_dir_all(&conv_dir).map_err(|source| SynthError::Io { path: conv_dir.clone(), source })?;
    let entries: Vec<ManifestEntry> = convs
        .par_iter()
        .map(|c| {
            let rel = Path::new("conversations").join(format!("{}.json", c.id));
            let file = out_dir.join(&rel);
            fs::write(&file, c.to_json()).map_err(|source| SynthError::Io { path: file, source })?;
            Ok(ManifestEntry { id: c.id.clone(), path: rel, split: c.split })
        })
        .collect::<Result<_, SynthError>>()?;
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest_path, &entries)?;
    Ok(load_manifest(&manifest_path)?)
}
