//! Turn-taking analysis and calibrated linear classification for
//! dual-channel customer/agent call transcripts.
//!
//! Pipeline: [`corpus`] loads conversations, [`turntaking`] labels the
//! S1..S8 timeline and computes the 64 TT features, [`features`] holds
//! feature matrices and the FSET/FRMX formats, [`selection`] ranks features
//! by MDLP information gain, [`learn`] trains and calibrates linear SVMs,
//! [`experiment`] runs config-driven train/devel evaluations and [`synth`]
//! generates labeled synthetic corpora.

pub mod corpus;
pub mod experiment;
pub mod features;
pub mod learn;
pub mod selection;
pub mod stats;
pub mod synth;
pub mod turntaking;

pub use corpus::{
    load_manifest, parse_conversation, Channel, Conversation, CorpusError, Labels, Manifest, ManifestEntry, Split,
    Task, Utterance,
};
pub use experiment::{derive_ttc, run_experiment, ExperimentConfig, ExperimentError, ExperimentReport, FeatureSetSpec};
pub use features::{FeatureError, FeatureMatrix, FormatError, FrameMatrix};
pub use learn::{LearnError, LinearModel, TrainedModel};
pub use selection::{rank_relevant, RelevanceRanking, SelectionError};
pub use synth::{generate_conversation, generate_dataset, DatasetConfig, Profile, SynthError};
pub use turntaking::{label_segments, Segment, SegmentSequence, SegmentType, Talkspurt, TurnTakingError};

/// Any error the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    TurnTaking(#[from] TurnTakingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
}

impl Error {
    /// `true` for problems with the input data, `false` for environment
    /// failures such as unreadable or unwritable files.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Corpus(e) => e.is_data_error(),
            Error::Format(e) => e.is_data_error(),
            Error::Experiment(e) => e.is_data_error(),
            Error::Synth(SynthError::Io { .. }) => false,
            Error::Synth(SynthError::Corpus(e)) => e.is_data_error(),
            Error::Io { .. } => false,
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
