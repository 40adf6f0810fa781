//! CSV tables: labels, predictions, training history, synthetic truth and
//! template bookkeeping.

use std::collections::BTreeMap;

use super::embeddings::{csv_error, parse_field};
use crate::aggregation::TemplateVector;
use crate::error::{Error, Result};
use crate::labels::{CalibratedScores, RecognizabilityLabels, SampleLabel};
use crate::predictor::{
    EpochRecord, LabelMode, PredictedScores, Predictions, TargetSource, TrainHistory,
};
use crate::types::{Role, SampleId, SubjectId, TemplateId};

const LABEL_COLUMNS: [&str; 7] = [
    "sample_id",
    "subject_id",
    "ccs",
    "nnccs",
    "ccas",
    "cr",
    "nearest_impostor",
];
const TEMPLATE_COLUMNS: [&str; 6] = [
    "template_id",
    "subject_id",
    "side",
    "retained",
    "discarded",
    "fallback",
];
const CALIBRATED_COLUMNS: [&str; 3] = ["calibrated_ccs", "calibrated_nnccs", "calibrated_ccas"];

fn g9(x: f64) -> String {
    format!("{x:.8e}")
}

fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn header_names(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

fn expect_header(found: &[String], expected: &[&str]) -> Result<()> {
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

/// Nine significant digits per float; calibrated columns only when every
/// row carries them.
pub fn format_labels(labels: &RecognizabilityLabels) -> Result<String> {
    let calibrated = labels.has_calibration();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = LABEL_COLUMNS.to_vec();
    if calibrated {
        header.extend(CALIBRATED_COLUMNS);
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in labels.rows() {
        let mut row = vec![
            r.sample.0.to_string(),
            r.subject.0.to_string(),
            g9(r.ccs),
            g9(r.nnccs),
            g9(r.ccas),
            g9(r.cr),
            r.nearest_impostor.0.to_string(),
        ];
        if let (true, Some(c)) = (calibrated, r.calibrated) {
            row.extend([g9(c.ccs), g9(c.nnccs), g9(c.ccas)]);
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

pub fn parse_labels(text: &str) -> Result<RecognizabilityLabels> {
    let mut rdr = reader(text);
    let header = header_names(&mut rdr)?;
    let calibrated = header.len() == LABEL_COLUMNS.len() + CALIBRATED_COLUMNS.len();
    let mut expected: Vec<&str> = LABEL_COLUMNS.to_vec();
    if calibrated {
        expected.extend(CALIBRATED_COLUMNS);
    }
    expect_header(&header, &expected)?;
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let f = |i: usize| parse_field::<f64>(&row[i], line, expected[i]);
        rows.push(SampleLabel {
            sample: SampleId(parse_field(&row[0], line, "sample_id")?),
            subject: SubjectId(parse_field(&row[1], line, "subject_id")?),
            ccs: f(2)?,
            nnccs: f(3)?,
            ccas: f(4)?,
            cr: f(5)?,
            nearest_impostor: SubjectId(parse_field(&row[6], line, "nearest_impostor")?),
            calibrated: if calibrated {
                Some(CalibratedScores {
                    ccs: f(7)?,
                    nnccs: f(8)?,
                    ccas: f(9)?,
                })
            } else {
                None
            },
        });
    }
    RecognizabilityLabels::from_rows(rows)
}

fn prediction_columns(mode: LabelMode, source: TargetSource) -> Vec<&'static str> {
    let (ccs, ccas) = match source {
        TargetSource::Raw => ("pred_ccs", "pred_ccas"),
        TargetSource::Calibrated => ("pred_calibrated_ccs", "pred_calibrated_ccas"),
    };
    match mode {
        LabelMode::Joint => vec![ccs, ccas],
        LabelMode::CcsOnly => vec![ccs],
        LabelMode::CcasOnly => vec![ccas],
        LabelMode::CrOnly => vec!["pred_cr"],
    }
}

pub fn format_predictions(preds: &Predictions) -> Result<String> {
    let cols = prediction_columns(preds.mode, preds.source);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id"];
    header.extend(&cols);
    w.write_record(&header).map_err(csv_error)?;
    for p in &preds.rows {
        let mut row = vec![p.sample.0.to_string()];
        for c in &cols {
            let v = if c.ends_with("ccas") {
                p.ccas
            } else if c.ends_with("ccs") {
                p.ccs
            } else {
                p.cr
            };
            let v = v.ok_or(Error::MissingScore {
                sample: p.sample,
                kind: c,
            })?;
            row.push(g17(v));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

pub fn parse_predictions(text: &str) -> Result<Predictions> {
    let mut rdr = reader(text);
    let header = header_names(&mut rdr)?;
    let found = (|| {
        for source in [TargetSource::Raw, TargetSource::Calibrated] {
            for mode in [
                LabelMode::Joint,
                LabelMode::CcsOnly,
                LabelMode::CcasOnly,
                LabelMode::CrOnly,
            ] {
                let mut expected = vec!["sample_id"];
                expected.extend(prediction_columns(mode, source));
                if expect_header(&header, &expected).is_ok() {
                    return Some((mode, source, expected));
                }
            }
        }
        None
    })();
    let (mode, source, cols) = found.ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("unrecognized prediction header {}", header.join(",")),
    })?;
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let mut p = PredictedScores {
            sample: SampleId(parse_field(&row[0], line, "sample_id")?),
            ccs: None,
            ccas: None,
            cr: None,
        };
        for (i, c) in cols.iter().enumerate().skip(1) {
            let v = Some(parse_field::<f64>(&row[i], line, c)?);
            if c.ends_with("ccas") {
                p.ccas = v;
            } else if c.ends_with("ccs") {
                p.ccs = v;
            } else {
                p.cr = v;
            }
        }
        rows.push(p);
    }
    Ok(Predictions { mode, source, rows })
}

pub fn format_history(history: &TrainHistory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "validation_spearman", "best"])
        .map_err(csv_error)?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            g17(e.train_loss),
            g17(e.validation_spearman),
            u8::from(e.epoch == history.best_epoch).to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn parse_history(text: &str) -> Result<TrainHistory> {
    let mut rdr = reader(text);
    let header = header_names(&mut rdr)?;
    expect_header(
        &header,
        &["epoch", "train_loss", "validation_spearman", "best"],
    )?;
    let mut history = TrainHistory::default();
    let mut best = None;
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let epoch: usize = parse_field(&row[0], line, "epoch")?;
        if parse_field::<u8>(&row[3], line, "best")? == 1 {
            best = Some(epoch);
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: parse_field(&row[1], line, "train_loss")?,
            validation_spearman: parse_field(&row[2], line, "validation_spearman")?,
        });
    }
    history.best_epoch = best.ok_or(Error::Parse {
        line: 0,
        message: "history has no best epoch".into(),
    })?;
    Ok(history)
}

pub fn format_truth(truth: &BTreeMap<SampleId, f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "true_quality"])
        .map_err(csv_error)?;
    for (s, q) in truth {
        w.write_record([s.0.to_string(), g17(*q)])
            .map_err(csv_error)?;
    }
    finish(w)
}

pub fn parse_truth(text: &str) -> Result<BTreeMap<SampleId, f64>> {
    let mut rdr = reader(text);
    let header = header_names(&mut rdr)?;
    expect_header(&header, &["sample_id", "true_quality"])?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let s = SampleId(parse_field(&row[0], line, "sample_id")?);
        if out
            .insert(s, parse_field(&row[1], line, "true_quality")?)
            .is_some()
        {
            return Err(Error::DuplicateSampleId(s));
        }
    }
    Ok(out)
}

/// Sidecar written next to aggregated templates.
pub fn format_template_summary(templates: &[TemplateVector]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TEMPLATE_COLUMNS).map_err(csv_error)?;
    for t in templates {
        w.write_record([
            t.template.0.to_string(),
            t.subject.0.to_string(),
            t.side.as_str().to_string(),
            t.retained_count.to_string(),
            t.discarded_count.to_string(),
            u8::from(t.fallback_used).to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

/// One row of the template sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateSummary {
    pub template: TemplateId,
    pub subject: SubjectId,
    pub side: Role,
    pub retained: usize,
    pub discarded: usize,
    pub fallback: bool,
}

pub fn parse_template_summary(text: &str) -> Result<Vec<TemplateSummary>> {
    let mut rdr = reader(text);
    let header = header_names(&mut rdr)?;
    expect_header(&header, &TEMPLATE_COLUMNS)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(TemplateSummary {
            template: TemplateId(parse_field(&row[0], line, "template_id")?),
            subject: SubjectId(parse_field(&row[1], line, "subject_id")?),
            side: parse_field(&row[2], line, "side")?,
            retained: parse_field(&row[3], line, "retained")?,
            discarded: parse_field(&row[4], line, "discarded")?,
            fallback: parse_field::<u8>(&row[5], line, "fallback")? == 1,
        });
    }
    Ok(out)
}
