//! Verification and image-level recognizability metrics.

mod erc;
mod report;
mod roc;
mod spearman;

pub use erc::{
    attach_quality, discard_count, erc, trapezoid, uniform_grid, ErcCurve, ErcPoint, QualifiedScore,
};
pub use report::{
    condition_report, ConditionReport, ConditionRow, ConditionSample, ErcRecord, MetricsReport,
    SpearmanRow, REPORT_SCHEMA,
};
pub use roc::{
    image_center_pairs, split_scores, tar_at_fmr, tar_at_fmr_scores, template_pairs,
    verification_scores, Comparand, ImpostorSampling, Pairing, RocCurve, RocPoint, ScorePair,
    TarAtFmr,
};
pub use spearman::{average_ranks, spearman};
