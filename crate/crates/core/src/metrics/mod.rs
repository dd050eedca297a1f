//! Frame, segment, remaining-time and surgery-duration metrics.

mod evaluate;
mod frame;
mod hungarian;
mod mae;
mod rsd;
mod segments;

pub use evaluate::{
    aggregate, evaluate_run, evaluate_video, evaluate_videos, Anticipator, EvalConfig, GroundTruthOracle, HorizonRow,
    MetricsReport, Prediction, VideoEvaluation,
};
pub use frame::{horizon_accuracy, per_class_f1, weighted_f1};
pub use hungarian::hungarian;
pub use mae::{mae_family, per_class_in_mae, wmae, MaeFamily};
pub use rsd::{ground_truth_rsd, hold_series, rsd_mae, rsd_mae_from_points, summarize_rsd, MeanStd, RsdErrors, RsdSummary};
pub use segments::{
    extract_segments, iou, match_segments, seg_f1, seg_f1_capped, segment_counts, MatchConfig, Segment,
    SegmentCounts,
};
