use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use salbias_core::emit::Format;
use salbias_core::report::Condition;

#[derive(Debug, Parser)]
#[command(
    name = "salbias",
    version,
    about = "Saliency-bias audit pipeline for manipulation detection datasets"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Corpus manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Artifact root; every output is written below it.
    #[arg(long, global = true, env = "SALBIAS_DATA_DIR", default_value = "salbias-data")]
    pub out: PathBuf,
    /// Worker threads for per-image work (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// File of image ids to leave out, one per line (`#` starts a comment).
    #[arg(long, global = true)]
    pub exclude: Option<PathBuf>,
    /// Number of saliency groups. Only 5 is supported.
    #[arg(long, global = true, default_value_t = 5)]
    pub bins: usize,
    /// Output format for report tables.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Log at debug level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    #[value(alias = "table-text")]
    Text,
    #[value(alias = "delimited-values")]
    Csv,
    #[value(alias = "structured-json")]
    Json,
}

impl From<ReportFormat> for Format {
    fn from(f: ReportFormat) -> Self {
        match f {
            ReportFormat::Text => Format::TableText,
            ReportFormat::Csv => Format::Delimited,
            ReportFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Original,
    SaliencyEnhanced,
    ResizedBaseline,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::Original => Condition::Original,
            ConditionArg::SaliencyEnhanced => Condition::SaliencyEnhanced,
            ConditionArg::ResizedBaseline => Condition::ResizedBaseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    /// Average of the per-image `saliency-map-*` artifacts.
    MachineFused,
    /// Saliency-task boxes from study responses.
    HumanStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Saliency,
    Manipulation,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse saliency maps (or human boxes), score each image and assign groups.
    ScoreSaliency {
        #[arg(long, value_enum, default_value_t = SourceArg::MachineFused)]
        source: SourceArg,
        /// Study responses (JSON lines or a study journal) for `human-study`.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Count images per saliency group and dataset.
    Bin,
    /// Per-image AuROC of one detector's heatmaps.
    EvalDetector {
        #[arg(long)]
        detector: String,
        #[arg(long, value_enum, default_value_t = ConditionArg::Original)]
        condition: ConditionArg,
        /// Manifest artifact key holding the heatmaps. Defaults to
        /// `detector-heatmap:<detector>` for the original condition and
        /// `detector-heatmap:<detector>@<condition>` otherwise.
        #[arg(long)]
        artifact: Option<String>,
    },
    /// Per-group before/after deltas between two runs of the same detectors.
    EnhanceCompare {
        /// Detectors to compare; defaults to every detector with both runs.
        #[arg(long)]
        detector: Vec<String>,
        #[arg(long, value_enum, default_value_t = ConditionArg::Original)]
        before: ConditionArg,
        #[arg(long, value_enum, default_value_t = ConditionArg::SaliencyEnhanced)]
        after: ConditionArg,
    },
    /// Tag-prediction drift between pristine and tampered images.
    SemanticChange,
    /// Turn study responses into confidence maps and human scores.
    AggregateAnnotations {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Both)]
        task: TaskArg,
    },
    /// Join assignments, runs and semantic results into report tables.
    Report,
    /// Run the annotation-study HTTP service.
    ServeStudy {
        #[arg(long, default_value = "study")]
        study_id: String,
        #[arg(long, default_value_t = salbias_study::study::DEFAULT_IMAGES_PER_SESSION)]
        images_per_session: usize,
        #[arg(long, default_value_t = salbias_study::study::DEFAULT_TARGET_REVIEWS)]
        target_reviews: usize,
        /// Journal file; defaults to `<out>/study/<study-id>.jsonl`.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
}
