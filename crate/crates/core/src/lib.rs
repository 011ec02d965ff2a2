//! Saliency-bias audit kernels for image manipulation detection datasets.
//!
//! The crate scores how visually salient each manipulated region is,
//! stratifies a corpus into five saliency groups, evaluates pixel-wise
//! localization per group and measures the semantic drift a manipulation
//! causes in a vision-language model's tag predictions.
//!
//! Every numeric type is generic over [`Score`] (`f32` or `f64`); the
//! `*F64`/`*F32` aliases below fix the precision for applications.

pub mod annotation;
pub mod corpus;
pub mod emit;
pub mod error;
pub mod map;
pub mod metrics;
pub mod report;
pub mod saliency;
pub mod scalar;
pub mod semantic;
pub mod tables;

pub use annotation::{
    aggregate_responses, human_detection_score, human_saliency_score, rasterize_boxes, BoundingBox, ConfidenceMap,
    StudyResponse, Task,
};
pub use corpus::{load_manifest, load_map, save_map, ArtifactKind, BitDepth, Corpus, Dataset, ImageRecord};
pub use error::{Error, Result};
pub use map::{align, align_mask, binarize_mask, PixelMap, Resample, TamperMask};
pub use metrics::{auroc, mean_recall, MetricResult};
pub use report::{bin_means, enhancement_delta, evaluate_run, semantic_trend, Condition, DetectorRun};
pub use saliency::{assign_bin, bin_distribution, fuse_saliency, saliency_score, SaliencyAssignment, SaliencyBin};
pub use scalar::Score;
pub use semantic::{aggregate_semantic, top_k, trial_metrics, SemanticChange, TagReport, TagTrial};

pub type PixelMapF64 = PixelMap<f64>;
pub type PixelMapF32 = PixelMap<f32>;
pub type MetricResultF64 = MetricResult<f64>;
pub type MetricResultF32 = MetricResult<f32>;
pub type ConfidenceMapF64 = ConfidenceMap<f64>;
pub type SaliencyAssignmentF64 = SaliencyAssignment<f64>;
pub type TagTrialF64 = TagTrial<f64>;
pub type TagReportF64 = TagReport<f64>;
pub type SemanticChangeF64 = SemanticChange<f64>;
pub type DetectorRunF64 = DetectorRun<f64>;
pub type BinReportF64 = report::BinReport<f64>;
pub type DeltaTableF64 = report::DeltaTable<f64>;
pub type SemanticTrendF64 = report::SemanticTrend<f64>;
