//! File-to-file pipeline stages.
//!
//! Each `run_*` function reads its inputs from the paths in a [`RunConfig`],
//! writes its artifacts, and writes a config echo next to its main output
//! (`<output>.run.toml`). Errors come back wrapped with the stage name.
//!
//! Side artifacts are named by appending a suffix to the main output's file
//! name:
//!
//! | stage       | main output      | side artifacts                         |
//! |-------------|------------------|----------------------------------------|
//! | `synth`     | embeddings       | `.truth.csv`                           |
//! | `calibrate` | labels           | `.calibration.json`                    |
//! | `train`     | head checkpoint  | `.history.csv`                         |
//! | `aggregate` | templates        | `.templates.csv`                       |
//! | `evaluate`  | metrics JSON     | `.txt` rendering                       |
//! | `remap`     | embeddings       | `.mapping.csv`                         |

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_templates, scored_samples, ScoreKind, ScoreSource, ScoredSample, TemplateVector,
};
use crate::calibration::{apply_calibration, fit_sigmoid_calibration, CalibrationParams};
use crate::error::{Error, Result};
use crate::evaluation::{
    attach_quality, condition_report, erc, image_center_pairs, spearman, split_scores, tar_at_fmr,
    template_pairs, uniform_grid, ConditionSample, ErcRecord, ImpostorSampling, MetricsReport,
    RocCurve, ScorePair, SpearmanRow, REPORT_SCHEMA,
};
use crate::io::{self, HeadCheckpoint, RunConfig, ScoreOrigin};
use crate::labels::{compute_class_centers, label_dataset, CenterMode, RecognizabilityLabels};
use crate::predictor::{predict, train, Predictions};
use crate::synth::generate;
use crate::types::{EmbeddingRecord, Role, SampleId};

/// `path` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("missing {what} path")))
}

fn write_echo(cfg: &RunConfig, output: &Path) -> Result<()> {
    io::write_bytes(&sibling(output, ".run.toml"), cfg.echo()?.as_bytes())
}

fn staged<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(stage))
}

/// Centers plus labels in one step.
pub fn label_records(
    records: &[EmbeddingRecord],
    mode: CenterMode,
) -> Result<RecognizabilityLabels> {
    let centers = compute_class_centers(records, mode)?;
    label_dataset(records, &centers)
}

/// A per-sample quality signal used to order comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualitySpec {
    /// The same value for every sample; discards follow probe id order.
    Constant,
    Score(ScoreOrigin, ScoreKind),
}

impl fmt::Display for QualitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualitySpec::Constant => f.write_str("constant"),
            QualitySpec::Score(o, k) => {
                let o = match o {
                    ScoreOrigin::Gt => "gt",
                    ScoreOrigin::Pred => "pred",
                };
                write!(f, "{o}_{}", k.name())
            }
        }
    }
}

impl FromStr for QualitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "constant" {
            return Ok(QualitySpec::Constant);
        }
        let (origin, kind) = s
            .split_once('_')
            .ok_or_else(|| Error::Config(format!("unknown quality {s:?}")))?;
        let origin = match origin {
            "gt" => ScoreOrigin::Gt,
            "pred" => ScoreOrigin::Pred,
            _ => return Err(Error::Config(format!("unknown quality {s:?}"))),
        };
        Ok(QualitySpec::Score(origin, kind.parse()?))
    }
}

/// Quality for every record, keyed by sample id.
pub fn quality_map(
    signal: QualitySpec,
    records: &[EmbeddingRecord],
    labels: Option<&RecognizabilityLabels>,
    predictions: Option<&Predictions>,
) -> Result<HashMap<u64, f64>> {
    let (origin, kind) = match signal {
        QualitySpec::Constant => return Ok(records.iter().map(|r| (r.sample.0, 0.0)).collect()),
        QualitySpec::Score(o, k) => (o, k),
    };
    let source = match origin {
        ScoreOrigin::Gt => ScoreSource::GroundTruth(
            labels.ok_or_else(|| Error::Config(format!("quality {signal} needs labels")))?,
        ),
        ScoreOrigin::Pred => ScoreSource::Predicted(
            predictions
                .ok_or_else(|| Error::Config(format!("quality {signal} needs predictions")))?,
        ),
    };
    scored_samples(records, source)?
        .iter()
        .map(|s| s.score(kind).map(|q| (s.sample.0, q)))
        .collect()
}

/// Template vectors as embedding records (role = template, sample id =
/// template id).
pub fn template_records(templates: &[TemplateVector]) -> Vec<EmbeddingRecord> {
    templates
        .iter()
        .map(|t| EmbeddingRecord {
            subject: t.subject,
            sample: SampleId(t.template.0),
            template: t.template,
            role: Role::Template,
            vector: t.vector.clone(),
        })
        .collect()
}

pub fn run_synth(cfg: &RunConfig) -> Result<()> {
    staged("synth", || {
        let output = required(&cfg.output, "output")?;
        let ds = generate(&cfg.synth())?;
        io::write_embeddings(&ds.records, output)?;
        io::write_bytes(
            &sibling(output, ".truth.csv"),
            io::format_truth(&ds.true_quality)?.as_bytes(),
        )?;
        write_echo(cfg, output)
    })
}

pub fn run_label(cfg: &RunConfig) -> Result<()> {
    staged("label", || {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let records = io::read_embeddings(input)?;
        let labels = label_records(&records, cfg.centers.into())?;
        io::write_bytes(output, io::format_labels(&labels)?.as_bytes())?;
        write_echo(cfg, output)
    })
}

pub fn run_calibrate(cfg: &RunConfig) -> Result<CalibrationParams> {
    staged("calibrate", || {
        let input = cfg
            .input
            .as_deref()
            .or(cfg.labels.as_deref())
            .ok_or_else(|| Error::Config("missing labels path".into()))?;
        let output = required(&cfg.output, "output")?;
        let labels = io::parse_labels(&io::read_text(input)?)?;
        let params = fit_sigmoid_calibration(&labels)?;
        let calibrated = apply_calibration(&params, &labels);
        io::write_bytes(output, io::format_labels(&calibrated)?.as_bytes())?;
        let json =
            serde_json::to_string_pretty(&params).map_err(|e| Error::Config(e.to_string()))?;
        io::write_bytes(&sibling(output, ".calibration.json"), json.as_bytes())?;
        write_echo(cfg, output)?;
        Ok(params)
    })
}

pub fn run_train(cfg: &RunConfig) -> Result<()> {
    staged("train", || {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let records = io::read_embeddings(input)?;
        let labels = io::parse_labels(&io::read_text(required(&cfg.labels, "labels")?)?)?;
        let tc = cfg.train();
        let (head, history) = train(&records, &labels, &tc)?;
        io::write_head(
            &HeadCheckpoint {
                mode: tc.label_mode,
                targets: tc.targets,
                head,
            },
            output,
        )?;
        io::write_bytes(
            &sibling(output, ".history.csv"),
            io::format_history(&history)?.as_bytes(),
        )?;
        write_echo(cfg, output)
    })
}

pub fn run_predict(cfg: &RunConfig) -> Result<()> {
    staged("predict", || {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let records = io::read_embeddings(input)?;
        let ckpt = io::read_head(required(&cfg.head, "head")?)?;
        let preds = predict(&ckpt.head, ckpt.mode, ckpt.targets, &records)?;
        io::write_bytes(output, io::format_predictions(&preds)?.as_bytes())?;
        write_echo(cfg, output)
    })
}

fn load_scored(cfg: &RunConfig, records: &[EmbeddingRecord]) -> Result<Vec<ScoredSample>> {
    match cfg.score {
        ScoreOrigin::Gt => {
            let labels = io::parse_labels(&io::read_text(required(&cfg.labels, "labels")?)?)?;
            scored_samples(records, ScoreSource::GroundTruth(&labels))
        }
        ScoreOrigin::Pred => {
            let preds =
                io::parse_predictions(&io::read_text(required(&cfg.predictions, "predictions")?)?)?;
            scored_samples(records, ScoreSource::Predicted(&preds))
        }
    }
}

pub fn run_aggregate(cfg: &RunConfig) -> Result<()> {
    staged("aggregate", || {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let records = io::read_embeddings(input)?;
        let scored = load_scored(cfg, &records)?;
        let templates = aggregate_templates(&scored, &cfg.aggregation())?;
        io::write_embeddings(&template_records(&templates), output)?;
        io::write_bytes(
            &sibling(output, ".templates.csv"),
            io::format_template_summary(&templates)?.as_bytes(),
        )?;
        write_echo(cfg, output)
    })
}

fn load_templates(path: &Path) -> Result<Vec<TemplateVector>> {
    let records = io::read_embeddings(path)?;
    let summary = io::parse_template_summary(&io::read_text(&sibling(path, ".templates.csv"))?)?;
    let by_id: BTreeMap<_, _> = summary.iter().map(|s| (s.template, s)).collect();
    records
        .into_iter()
        .map(|r| {
            let s = by_id.get(&r.template).ok_or_else(|| {
                Error::Config(format!("template {} missing from sidecar", r.template))
            })?;
            Ok(TemplateVector {
                template: r.template,
                subject: r.subject,
                side: s.side,
                vector: r.vector,
                retained_count: s.retained,
                discarded_count: s.discarded,
                fallback_used: s.fallback,
            })
        })
        .collect()
}

fn optional_labels(cfg: &RunConfig) -> Result<Option<RecognizabilityLabels>> {
    cfg.labels
        .as_deref()
        .map(|p| io::parse_labels(&io::read_text(p)?))
        .transpose()
}

fn optional_predictions(cfg: &RunConfig) -> Result<Option<Predictions>> {
    cfg.predictions
        .as_deref()
        .map(|p| io::parse_predictions(&io::read_text(p)?))
        .transpose()
}

/// Samples that enter image-level statistics: probes when the dataset has
/// a gallery/probe split, everything otherwise.
pub fn evaluation_subset(records: &[EmbeddingRecord]) -> Vec<&EmbeddingRecord> {
    let has_probe = records.iter().any(|r| r.role == Role::Probe);
    let has_gallery = records.iter().any(|r| r.role == Role::Gallery);
    records
        .iter()
        .filter(|r| !(has_probe && has_gallery) || r.role == Role::Probe)
        .collect()
}

/// Spearman correlation of every predicted output against its
/// ground-truth label.
pub fn spearman_rows(
    records: &[EmbeddingRecord],
    labels: &RecognizabilityLabels,
    preds: &Predictions,
) -> Result<Vec<SpearmanRow>> {
    let subset: Vec<EmbeddingRecord> = evaluation_subset(records).into_iter().cloned().collect();
    let gt = scored_samples(&subset, ScoreSource::GroundTruth(labels))?;
    let pr = scored_samples(&subset, ScoreSource::Predicted(preds))?;
    let mut rows = Vec::new();
    for kind in [
        ScoreKind::Ccs,
        ScoreKind::Ccas,
        ScoreKind::Cr,
        ScoreKind::CalibratedCcas,
    ] {
        let p: Result<Vec<f64>> = pr.iter().map(|s| s.score(kind)).collect();
        let g: Result<Vec<f64>> = gt.iter().map(|s| s.score(kind)).collect();
        if let (Ok(p), Ok(g)) = (p, g) {
            rows.push(SpearmanRow {
                predicted: format!("pred_{}", kind.name()),
                reference: format!("gt_{}", kind.name()),
                samples: p.len(),
                value: spearman(&p, &g)?,
            });
        }
    }
    Ok(rows)
}

/// Shared by the `evaluate` and `erc` subcommands.
pub fn evaluate(cfg: &RunConfig, stage: &'static str) -> Result<MetricsReport> {
    staged(stage, || {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let config_json = serde_json::to_value(cfg.clone().resolved())
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut report = MetricsReport::new(stage, config_json);
        let sampling = cfg.impostors_per_probe.map(|per_probe| ImpostorSampling {
            per_probe,
            seed: cfg.seed,
        });

        let template_mode = sibling(input, ".templates.csv").exists();
        let labels = optional_labels(cfg)?;
        let preds = optional_predictions(cfg)?;
        let (pairs, records): (Vec<ScorePair>, Option<Vec<EmbeddingRecord>>) = if template_mode {
            (template_pairs(&load_templates(input)?)?, None)
        } else {
            let records = io::read_embeddings(input)?;
            let centers = compute_class_centers(&records, cfg.centers.into())?;
            (
                image_center_pairs(&records, &centers, sampling)?,
                Some(records),
            )
        };

        let (genuine, impostor) = split_scores(&pairs);
        report.genuine_pairs = genuine.len();
        report.impostor_pairs = impostor.len();
        report.roc = RocCurve::from_pairs(&pairs)?.thinned(cfg.roc_points).points;
        for &fmr in &cfg.target_fmrs {
            let row = tar_at_fmr(&pairs, fmr)?;
            if row.resolution_limited {
                report.warnings.push(format!(
                    "target FMR {fmr:e} is below the impostor resolution 1/{}",
                    impostor.len()
                ));
            }
            report.tar_at_fmr.push(row);
        }

        let qualities: Vec<QualitySpec> = cfg
            .quality
            .iter()
            .map(|q| q.parse())
            .collect::<Result<_>>()?;
        if stage == "erc" && qualities.is_empty() {
            return Err(Error::Config("erc needs at least one --quality".into()));
        }
        if !qualities.is_empty() {
            let records = records.as_ref().ok_or_else(|| {
                Error::Config("ERC needs image-level embeddings, not templates".into())
            })?;
            let grid = uniform_grid(cfg.grid)?;
            for q in qualities {
                let map = quality_map(q, records, labels.as_ref(), preds.as_ref())?;
                let (gq, imp) = attach_quality(&pairs, &map)?;
                for &fmr in &cfg.target_fmrs {
                    report.erc.push(ErcRecord {
                        quality: q.to_string(),
                        curve: erc(&gq, &imp, fmr, &grid)?,
                    });
                }
            }
        }
        if let (Some(records), Some(l), Some(p)) =
            (records.as_ref(), labels.as_ref(), preds.as_ref())
        {
            report.spearman = spearman_rows(records, l, p)?;
        }

        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
        io::write_bytes(output, json.as_bytes())?;
        io::write_bytes(&sibling(output, ".txt"), report.to_text().as_bytes())?;
        write_echo(cfg, output)?;
        Ok(report)
    })
}

/// Renders every metrics document in `dir`, in file-name order.
pub fn run_report(dir: &Path) -> Result<String> {
    staged("report", || {
        let entries = std::fs::read_dir(dir).map_err(|source| Error::File {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = String::new();
        for p in paths {
            let Ok(report) = serde_json::from_slice::<MetricsReport>(&io::read_bytes(&p)?) else {
                continue;
            };
            if report.schema != REPORT_SCHEMA {
                continue;
            }
            out.push_str(&format!("== {}\n", p.display()));
            out.push_str(&report.to_text());
            out.push('\n');
        }
        if out.is_empty() {
            return Err(Error::EmptyInput(
                "metrics reports in the evaluation directory",
            ));
        }
        Ok(out)
    })
}

/// One condition of a sweep: ground-truth labels and predictions for the
/// same samples.
#[derive(Debug, Clone)]
pub struct ConditionInput {
    pub name: String,
    pub labels: PathBuf,
    pub predictions: PathBuf,
}

impl FromStr for ConditionInput {
    type Err = Error;

    /// `name=labels.csv,predictions.csv`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("condition {s:?} is not name=labels,predictions"));
        let (name, files) = s.split_once('=').ok_or_else(bad)?;
        let (labels, predictions) = files.split_once(',').ok_or_else(bad)?;
        Ok(ConditionInput {
            name: name.to_string(),
            labels: labels.into(),
            predictions: predictions.into(),
        })
    }
}

pub fn run_conditions(
    conditions: &[ConditionInput],
    output: Option<&Path>,
) -> Result<MetricsReport> {
    staged("report", || {
        if conditions.is_empty() {
            return Err(Error::EmptyInput("conditions"));
        }
        let mut groups = Vec::new();
        for c in conditions {
            let labels = io::parse_labels(&io::read_text(&c.labels)?)?;
            let preds = io::parse_predictions(&io::read_text(&c.predictions)?)?;
            let samples = preds
                .rows
                .iter()
                .map(|p| {
                    let l = labels.get(p.sample).ok_or(Error::MissingScore {
                        sample: p.sample,
                        kind: "label",
                    })?;
                    let missing = |kind| Error::MissingScore {
                        sample: p.sample,
                        kind,
                    };
                    Ok(ConditionSample {
                        gt_ccs: l.ccs,
                        gt_ccas: l.ccas,
                        pred_ccs: p.ccs.ok_or(missing("pred_ccs"))?,
                        pred_ccas: p.ccas.ok_or(missing("pred_ccas"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            groups.push((c.name.clone(), samples));
        }
        let mut report = MetricsReport::new("report", serde_json::Value::Null);
        report.conditions = condition_report(&groups)?.rows;
        for r in &report.conditions {
            if !r.is_defined() {
                report.warnings.push(format!(
                    "condition {} has an undefined correlation",
                    r.condition
                ));
            }
        }
        if let Some(out) = output {
            let json =
                serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
            io::write_bytes(out, json.as_bytes())?;
        }
        Ok(report)
    })
}

pub fn run_remap(input: &Path, output: &Path) -> Result<()> {
    staged("remap", || {
        let (records, mapping) = io::remap_text(&io::read_text(input)?)?;
        io::write_embeddings(&records, output)?;
        io::write_bytes(
            &sibling(output, ".mapping.csv"),
            io::format_mapping(&mapping)?.as_bytes(),
        )
    })
}
