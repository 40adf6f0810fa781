//! Per-condition summaries and the shared metrics-report document.

use serde::{Deserialize, Serialize};

use super::erc::ErcCurve;
use super::roc::{RocPoint, TarAtFmr};
use super::spearman::spearman;
use crate::error::{Error, Result};

/// Ground-truth and predicted scores for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSample {
    pub gt_ccs: f64,
    pub gt_ccas: f64,
    pub pred_ccs: f64,
    pub pred_ccas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub samples: usize,
    pub mean_gt_ccs: f64,
    pub mean_pred_ccs: f64,
    /// `None` when the correlation is undefined for this group.
    pub sc_ccs: Option<f64>,
    pub mean_gt_ccas: f64,
    pub mean_pred_ccas: f64,
    pub sc_ccas: Option<f64>,
}

impl ConditionRow {
    pub fn is_defined(&self) -> bool {
        self.sc_ccs.is_some() && self.sc_ccas.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub rows: Vec<ConditionRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn sc(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    match spearman(a, b) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation) | Err(Error::EmptyInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One row per condition, in input order. Groups that are too small or
/// constant get `None` correlations; the others are unaffected.
pub fn condition_report(groups: &[(String, Vec<ConditionSample>)]) -> Result<ConditionReport> {
    let rows = groups
        .iter()
        .map(|(name, samples)| {
            let col = |f: fn(&ConditionSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
            let (gc, pc) = (col(|s| s.gt_ccs), col(|s| s.pred_ccs));
            let (ga, pa) = (col(|s| s.gt_ccas), col(|s| s.pred_ccas));
            Ok(ConditionRow {
                condition: name.clone(),
                samples: samples.len(),
                mean_gt_ccs: mean(gc.iter().copied()),
                mean_pred_ccs: mean(pc.iter().copied()),
                sc_ccs: sc(&pc, &gc)?,
                mean_gt_ccas: mean(ga.iter().copied()),
                mean_pred_ccas: mean(pa.iter().copied()),
                sc_ccas: sc(&pa, &ga)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub predicted: String,
    pub reference: String,
    pub samples: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErcRecord {
    pub quality: String,
    #[serde(flatten)]
    pub curve: ErcCurve,
}

/// The single document every `evaluate`/`erc` run writes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub stage: String,
    pub config: serde_json::Value,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    pub roc: Vec<RocPoint>,
    pub tar_at_fmr: Vec<TarAtFmr>,
    pub erc: Vec<ErcRecord>,
    pub spearman: Vec<SpearmanRow>,
    pub conditions: Vec<ConditionRow>,
    pub warnings: Vec<String>,
}

pub const REPORT_SCHEMA: &str = "recog-metrics/1";

impl MetricsReport {
    pub fn new(stage: &str, config: serde_json::Value) -> Self {
        MetricsReport {
            schema: REPORT_SCHEMA.to_string(),
            stage: stage.to_string(),
            config,
            ..Default::default()
        }
    }

    /// Human-readable tables.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# {} ({})", self.stage, self.schema);
        if !self.tar_at_fmr.is_empty() {
            let _ = writeln!(
                out,
                "\nTAR@FMR  genuine={} impostor={}",
                self.genuine_pairs, self.impostor_pairs
            );
            let _ = writeln!(
                out,
                "{:>12} {:>10} {:>12} {:>12}",
                "target_fmr", "tar", "fmr", "threshold"
            );
            for r in &self.tar_at_fmr {
                let _ = writeln!(
                    out,
                    "{:>12.1e} {:>10.4} {:>12.3e} {:>12.6}{}",
                    r.target_fmr,
                    r.tar,
                    r.fmr,
                    r.threshold,
                    if r.resolution_limited {
                        "  (resolution limited)"
                    } else {
                        ""
                    }
                );
            }
        }
        if !self.erc.is_empty() {
            let _ = writeln!(out, "\nERC");
            let _ = writeln!(
                out,
                "{:<22} {:>12} {:>10} {:>12}",
                "quality", "target_fmr", "auc", "fnmr@0"
            );
            for e in &self.erc {
                let _ = writeln!(
                    out,
                    "{:<22} {:>12.1e} {:>10.5} {:>12.5}",
                    e.quality,
                    e.curve.target_fmr,
                    e.curve.auc,
                    e.curve.points.first().map_or(f64::NAN, |p| p.fnmr)
                );
            }
        }
        if !self.spearman.is_empty() {
            let _ = writeln!(out, "\nSpearman");
            for s in &self.spearman {
                let _ = writeln!(
                    out,
                    "{:<22} vs {:<14} n={:<7} {:.4}",
                    s.predicted, s.reference, s.samples, s.value
                );
            }
        }
        if !self.conditions.is_empty() {
            let _ = writeln!(out, "\nConditions");
            let _ = writeln!(
                out,
                "{:<14} {:>6} {:>9} {:>9} {:>8} {:>9} {:>9} {:>8}",
                "condition", "n", "gt_ccs", "pred_ccs", "sc_ccs", "gt_ccas", "pred_ccas", "sc_ccas"
            );
            let fmt_sc = |v: Option<f64>| v.map_or("undef".to_string(), |x| format!("{x:.4}"));
            for r in &self.conditions {
                let _ = writeln!(
                    out,
                    "{:<14} {:>6} {:>9.4} {:>9.4} {:>8} {:>9.4} {:>9.4} {:>8}",
                    r.condition,
                    r.samples,
                    r.mean_gt_ccs,
                    r.mean_pred_ccs,
                    fmt_sc(r.sc_ccs),
                    r.mean_gt_ccas,
                    r.mean_pred_ccas,
                    fmt_sc(r.sc_ccas)
                );
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
