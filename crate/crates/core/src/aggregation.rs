//! Template construction from per-sample embeddings and recognizability
//! scores.
//!
//! A policy optionally filters samples (keep `score > cutoff`) and then takes
//! a weighted mean `Σ w_k z_k / Σ w_k` of what remains, with
//! `w_k = max(score_k, weight_floor)`. Uniform policies use `w_k = 1`. If a
//! filter removes every sample of a template, the template falls back to the
//! uniform mean of all its samples.
//!
//! Samples inside a template are always processed in ascending sample id,
//! so results do not depend on input order. Aggregated vectors are not
//! re-normalized.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::RecognizabilityLabels;
use crate::predictor::{Predictions, TargetSource};
use crate::types::{EmbeddingRecord, Role, SampleId, SubjectId, TemplateId};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Ccs,
    Ccas,
    Cr,
    CalibratedCcas,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Ccs => "ccs",
            ScoreKind::Ccas => "ccas",
            ScoreKind::Cr => "cr",
            ScoreKind::CalibratedCcas => "calibrated_ccas",
        }
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccs" => Ok(ScoreKind::Ccs),
            "ccas" => Ok(ScoreKind::Ccas),
            "cr" => Ok(ScoreKind::Cr),
            "calibrated_ccas" => Ok(ScoreKind::CalibratedCcas),
            other => Err(Error::Config(format!("unknown score kind {other:?}"))),
        }
    }
}

/// One sample with the scores a policy may consult.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample: SampleId,
    pub subject: SubjectId,
    pub template: TemplateId,
    pub role: Role,
    pub embedding: Vec<f64>,
    pub ccs: Option<f64>,
    pub ccas: Option<f64>,
    pub cr: Option<f64>,
    pub calibrated_ccas: Option<f64>,
}

impl ScoredSample {
    pub fn score(&self, kind: ScoreKind) -> Result<f64> {
        let v = match kind {
            ScoreKind::Ccs => self.ccs,
            ScoreKind::Ccas => self.ccas,
            ScoreKind::Cr => self.cr,
            ScoreKind::CalibratedCcas => self.calibrated_ccas,
        };
        match v {
            Some(x) if x.is_finite() => Ok(x),
            Some(_) => Err(Error::Config(format!(
                "sample {} has a non-finite {} score",
                self.sample,
                kind.name()
            ))),
            None => Err(Error::MissingScore {
                sample: self.sample,
                kind: kind.name(),
            }),
        }
    }
}

/// Where per-sample scores come from.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    GroundTruth(&'a RecognizabilityLabels),
    Predicted(&'a Predictions),
}

/// Joins records with their scores. Records without a score row are an
/// error; individual missing fields surface later, when a policy needs them.
pub fn scored_samples(
    records: &[EmbeddingRecord],
    source: ScoreSource,
) -> Result<Vec<ScoredSample>> {
    let index: Option<HashMap<SampleId, _>> = match source {
        ScoreSource::Predicted(p) => Some(p.index()),
        ScoreSource::GroundTruth(_) => None,
    };
    records
        .iter()
        .map(|r| {
            let mut s = ScoredSample {
                sample: r.sample,
                subject: r.subject,
                template: r.template,
                role: r.role,
                embedding: r.vector.clone(),
                ccs: None,
                ccas: None,
                cr: None,
                calibrated_ccas: None,
            };
            let missing = || Error::MissingScore {
                sample: r.sample,
                kind: "score row",
            };
            match source {
                ScoreSource::GroundTruth(labels) => {
                    let l = labels.get(r.sample).ok_or_else(missing)?;
                    s.ccs = Some(l.ccs);
                    s.ccas = Some(l.ccas);
                    s.cr = Some(l.cr);
                    s.calibrated_ccas = l.calibrated.map(|c| c.ccas);
                }
                ScoreSource::Predicted(preds) => {
                    let p = index
                        .as_ref()
                        .and_then(|m| m.get(&r.sample))
                        .ok_or_else(missing)?;
                    match preds.source {
                        TargetSource::Raw => {
                            s.ccs = p.ccs;
                            s.ccas = p.ccas;
                            s.cr = p.cr;
                        }
                        TargetSource::Calibrated => s.calibrated_ccas = p.ccas,
                    }
                }
            }
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Average,
    CcsWeight,
    CcasFilter,
    CcasFilterPlusCcsWeight,
    CcasWeight,
    CcasFilterPlusCcasWeight,
    CrWeight,
    #[serde(rename = "cr_filter_0_5")]
    CrFilter,
    CrFilterPlusWeight,
    CalibratedCcasWeight,
    CalibratedCcasFilter,
    CalibratedCcasFilterPlusWeight,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 12] = [
        PolicyKind::Average,
        PolicyKind::CcsWeight,
        PolicyKind::CcasFilter,
        PolicyKind::CcasFilterPlusCcsWeight,
        PolicyKind::CcasWeight,
        PolicyKind::CcasFilterPlusCcasWeight,
        PolicyKind::CrWeight,
        PolicyKind::CrFilter,
        PolicyKind::CrFilterPlusWeight,
        PolicyKind::CalibratedCcasWeight,
        PolicyKind::CalibratedCcasFilter,
        PolicyKind::CalibratedCcasFilterPlusWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Average => "average",
            PolicyKind::CcsWeight => "ccs_weight",
            PolicyKind::CcasFilter => "ccas_filter",
            PolicyKind::CcasFilterPlusCcsWeight => "ccas_filter_plus_ccs_weight",
            PolicyKind::CcasWeight => "ccas_weight",
            PolicyKind::CcasFilterPlusCcasWeight => "ccas_filter_plus_ccas_weight",
            PolicyKind::CrWeight => "cr_weight",
            PolicyKind::CrFilter => "cr_filter_0_5",
            PolicyKind::CrFilterPlusWeight => "cr_filter_plus_weight",
            PolicyKind::CalibratedCcasWeight => "calibrated_ccas_weight",
            PolicyKind::CalibratedCcasFilter => "calibrated_ccas_filter",
            PolicyKind::CalibratedCcasFilterPlusWeight => "calibrated_ccas_filter_plus_weight",
        }
    }

    pub fn filter(self) -> Option<ScoreKind> {
        use PolicyKind::*;
        match self {
            CcasFilter | CcasFilterPlusCcsWeight | CcasFilterPlusCcasWeight => {
                Some(ScoreKind::Ccas)
            }
            CrFilter | CrFilterPlusWeight => Some(ScoreKind::Cr),
            CalibratedCcasFilter | CalibratedCcasFilterPlusWeight => {
                Some(ScoreKind::CalibratedCcas)
            }
            Average | CcsWeight | CcasWeight | CrWeight | CalibratedCcasWeight => None,
        }
    }

    pub fn weight(self) -> Option<ScoreKind> {
        use PolicyKind::*;
        match self {
            CcsWeight | CcasFilterPlusCcsWeight => Some(ScoreKind::Ccs),
            CcasWeight | CcasFilterPlusCcasWeight => Some(ScoreKind::Ccas),
            CrWeight | CrFilterPlusWeight => Some(ScoreKind::Cr),
            CalibratedCcasWeight | CalibratedCcasFilterPlusWeight => {
                Some(ScoreKind::CalibratedCcas)
            }
            Average | CcasFilter | CrFilter | CalibratedCcasFilter => None,
        }
    }

    /// 0.5 for certainty-ratio filters, 0 otherwise.
    pub fn default_cutoff(self) -> f64 {
        match self.filter() {
            Some(ScoreKind::Cr) => 0.5,
            _ => 0.0,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregation policy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationPolicy {
    pub kind: PolicyKind,
    pub cutoff: f64,
    pub weight_floor: f64,
}

impl AggregationPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        AggregationPolicy {
            kind,
            cutoff: kind.default_cutoff(),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cutoff.is_finite() {
            return Err(Error::Config("cutoff must be finite".into()));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::Config(
                "weight_floor must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

impl From<PolicyKind> for AggregationPolicy {
    fn from(kind: PolicyKind) -> Self {
        AggregationPolicy::new(kind)
    }
}

/// Splits into (score > cutoff, the rest), each keeping input order.
pub fn filter_by_score<'a>(
    samples: &[&'a ScoredSample],
    kind: ScoreKind,
    cutoff: f64,
) -> Result<(Vec<&'a ScoredSample>, Vec<&'a ScoredSample>)> {
    let mut retained = Vec::new();
    let mut discarded = Vec::new();
    for &s in samples {
        if s.score(kind)? > cutoff {
            retained.push(s);
        } else {
            discarded.push(s);
        }
    }
    Ok((retained, discarded))
}

/// `Σ w_k z_k / Σ w_k` in input order. Equal weights reduce to the plain
/// mean `Σ z_k / n`, computed the same way as the uniform policy.
pub fn weighted_aggregate(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("aggregate"))?;
    if vectors.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} vectors vs {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Config("aggregation weights must be positive".into()));
    }
    let dim = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let mut acc = vec![0.0; dim];
    let uniform = weights.iter().all(|&w| w == weights[0]);
    let total = if uniform {
        for v in vectors {
            acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += x);
        }
        vectors.len() as f64
    } else {
        for (v, &w) in vectors.iter().zip(weights) {
            acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += w * x);
        }
        weights.iter().sum()
    };
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateVector {
    pub template: TemplateId,
    pub subject: SubjectId,
    /// Role of the samples the template was built from.
    pub side: Role,
    pub vector: Vec<f64>,
    pub retained_count: usize,
    pub discarded_count: usize,
    pub fallback_used: bool,
}

fn aggregate_one(
    template: TemplateId,
    members: &mut [&ScoredSample],
    policy: &AggregationPolicy,
) -> Result<TemplateVector> {
    members.sort_by_key(|s| s.sample);
    let head = members.first().ok_or(Error::EmptyTemplate(template))?;
    if let Some(s) = members
        .iter()
        .find(|s| s.subject != head.subject || s.role != head.role)
    {
        return Err(Error::Config(format!(
            "template {template} mixes subjects or roles (sample {})",
            s.sample
        )));
    }
    let (retained, discarded_count) = match policy.kind.filter() {
        Some(kind) => {
            let (keep, drop) = filter_by_score(members, kind, policy.cutoff)?;
            (keep, drop.len())
        }
        None => (members.to_vec(), 0),
    };
    let fallback_used = retained.is_empty();
    let used: &[&ScoredSample] = if fallback_used { members } else { &retained };
    let vectors: Vec<&[f64]> = used.iter().map(|s| s.embedding.as_slice()).collect();
    let weights: Vec<f64> = match (policy.kind.weight(), fallback_used) {
        (Some(kind), false) => used
            .iter()
            .map(|s| s.score(kind).map(|v| v.max(policy.weight_floor)))
            .collect::<Result<_>>()?,
        _ => vec![1.0; used.len()],
    };
    Ok(TemplateVector {
        template,
        subject: head.subject,
        side: head.role,
        vector: weighted_aggregate(&vectors, &weights)?,
        retained_count: members.len() - discarded_count,
        discarded_count,
        fallback_used,
    })
}

/// One vector per template id, in ascending template order.
pub fn aggregate_templates(
    samples: &[ScoredSample],
    policy: &AggregationPolicy,
) -> Result<Vec<TemplateVector>> {
    policy.validate()?;
    let mut groups: BTreeMap<TemplateId, Vec<&ScoredSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.template).or_default().push(s);
    }
    let mut groups: Vec<(TemplateId, Vec<&ScoredSample>)> = groups.into_iter().collect();
    groups
        .par_iter_mut()
        .map(|(t, members)| aggregate_one(*t, members, policy))
        .collect()
}
