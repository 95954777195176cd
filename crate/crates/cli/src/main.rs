mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use turnlens::corpus::Task;
use turnlens::turntaking::DEFAULT_MERGE_GAP;

/// Turn-taking features and calibrated classifiers for dual-channel call
/// transcripts.
#[derive(Debug, Parser)]
#[command(name = "turnlens", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads for per-conversation stages (default: logical cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label one conversation's timeline with segment types S1..S8.
    Segment(SegmentArgs),
    /// Compute the 64 turn-taking features for every conversation in a manifest.
    Tt(TtArgs),
    /// Rank turn-taking features by information gain on the Train split.
    Select(SelectArgs),
    /// Pool frame-level FRMX files into an FSET of mean/sd/kurtosis/skewness.
    Pool(PoolArgs),
    /// Concatenate FSET files column-wise.
    Concat(ConcatArgs),
    /// Train a calibrated linear classifier on the Train split.
    Train(TrainArgs),
    /// Score a split with a trained model and report UAR.
    Eval(EvalArgs),
    /// Run a config-driven experiment and write report.json and report.txt.
    Experiment(ExperimentArgs),
    /// Generate a synthetic labeled corpus from Markov profiles.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Conversation JSON file.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Pauses shorter than this (seconds) are absorbed into talkspurts.
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    pub merge_gap: f64,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TtArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    pub merge_gap: f64,
    /// FSET output; feature names go to `<out>.names.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    pub merge_gap: f64,
    /// Rank the columns of this FSET instead of turn-taking features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Directory of `.frmx` files, one per conversation.
    #[arg(long)]
    pub frames: PathBuf,
    /// Set name stored in the output.
    #[arg(long, default_value = "pooled")]
    pub name: String,
    /// Order rows by this manifest and require a file for every entry.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConcatArgs {
    /// FSET files in column order.
    #[arg(long = "in", value_name = "FILE", num_args = 2.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureSource {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub task: Task,
    /// FSET file, or `tt` to compute turn-taking features.
    #[arg(long, default_value = "tt")]
    pub features: String,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    pub merge_gap: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: FeatureSource,
    /// Fixed complexity parameter; without it C is searched on Devel.
    #[arg(long = "c", value_name = "C")]
    pub c: Option<f64>,
    /// Weight classes by inverse frequency.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, default_value_t = 5)]
    pub calibration_folds: usize,
    /// Model JSON output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: FeatureSource,
    #[arg(long)]
    pub model: PathBuf,
    /// Split to score: train or devel.
    #[arg(long, default_value = "devel")]
    pub split: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset config JSON (conversation count and profile mixture).
    #[arg(long, required_unless_present = "example_config")]
    pub config: Option<PathBuf>,
    /// Override the config's conversation count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory for conversations/ and manifest.json.
    #[arg(long, required_unless_present = "example_config")]
    pub out: Option<PathBuf>,
    /// Print an example two-profile config and exit.
    #[arg(long)]
    pub example_config: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&std::env::var("TURNLENS_LOG").unwrap_or_else(|_| "warn".into()))
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
