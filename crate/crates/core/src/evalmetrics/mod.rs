//! Scoring of model predictions: counting accuracy, detection accuracy and
//! mAP with size strata, VQA format conformance and sketch-based retrieval.

mod counting;
mod detection;
mod matching;
mod report;
mod sbir;
mod vqa;

pub use counting::{counting_accuracy, score_counting, CountScore};
pub use detection::{
    average_precision, detection_accuracy, detection_cases, mean_average_precision, Averaging,
    DetCase, DetectionInput, DetectionScores, GtBox, Stratum, MEDIUM_AREA, RECALL_POINTS,
    SMALL_AREA,
};
pub use matching::{greedy_match, iou, iou_thresholds, MatchResult};
pub use report::{emit_report, Metric, MetricReport, RenderedReport, ReportRow, AVG_COLUMN};
pub use sbir::{
    build_sbir_gallery, evenly_spaced_ranks, rank_gallery, sbir_acc_at_k, score_sbir,
    GallerySpec, LabeledItem, ScoreEntry, ScoreMatrix, GALLERY_CLASSES, PER_CLASS,
};
pub use vqa::{vqa_conformance, VqaConformance};
