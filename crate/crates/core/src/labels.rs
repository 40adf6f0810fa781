//! Ground-truth recognizability labels.
//!
//! Every sample is compared to the mean embedding ("class center") of each
//! identity:
//!
//! * **CCS**: cosine to its own class center.
//! * **NNCCS**: the largest cosine to any other class center, together with
//!   the identity that attains it.
//! * **CCAS** = CCS − NNCCS. A sample has CCAS > 0 exactly when its own
//!   center is strictly the nearest center, i.e. it sits on the correct side
//!   of the nearest-center decision boundary.
//! * **CR** = CCS / (NNCCS + 1 + ε), the certainty-ratio baseline.
//!
//! Centers are kept as un-normalized means; normalization happens inside the
//! cosine.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cosine, cosine_with_norms, is_usable, norm};
use crate::types::{EmbeddingRecord, Role, SampleId, SubjectId};

/// Stabilizer in the certainty-ratio denominator.
pub const CR_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// Centers from gallery records only.
    GalleryOnly,
    /// Centers from every record of the identity.
    FullSet,
}

impl std::str::FromStr for CenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gallery" | "gallery_only" => Ok(CenterMode::GalleryOnly),
            "full" | "full_set" => Ok(CenterMode::FullSet),
            other => Err(Error::Config(format!("unknown center mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenter {
    pub vector: Vec<f64>,
    pub count: usize,
    norm: f64,
}

impl ClassCenter {
    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Per-identity mean embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenterSet {
    mode: CenterMode,
    dim: usize,
    centers: BTreeMap<SubjectId, ClassCenter>,
}

impl ClassCenterSet {
    pub fn mode(&self) -> CenterMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn get(&self, subject: SubjectId) -> Option<&ClassCenter> {
        self.centers.get(&subject)
    }

    /// Centers in ascending subject order.
    pub fn iter(&self) -> impl Iterator<Item = (SubjectId, &ClassCenter)> {
        self.centers.iter().map(|(s, c)| (*s, c))
    }
}

/// Averages contributing vectors per subject.
///
/// In gallery-only mode only gallery records contribute, and every subject
/// that appears on the probe side must have at least one gallery record.
pub fn compute_class_centers(
    records: &[EmbeddingRecord],
    mode: CenterMode,
) -> Result<ClassCenterSet> {
    let dim = records.first().ok_or(Error::EmptyInput("records"))?.dim();
    let mut sums: BTreeMap<SubjectId, (Vec<f64>, usize)> = BTreeMap::new();
    let mut referenced: BTreeMap<SubjectId, ()> = BTreeMap::new();

    for r in records {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.dim(),
            }
            .at_sample(r.sample));
        }
        referenced.insert(r.subject, ());
        let contributes = match mode {
            CenterMode::GalleryOnly => r.role == Role::Gallery,
            CenterMode::FullSet => true,
        };
        if contributes {
            let entry = sums.entry(r.subject).or_insert_with(|| (vec![0.0; dim], 0));
            entry.0.iter_mut().zip(&r.vector).for_each(|(s, v)| *s += v);
            entry.1 += 1;
        }
    }

    if let Some(missing) = referenced.keys().find(|s| !sums.contains_key(s)) {
        return Err(Error::MissingCenter(*missing));
    }

    let centers = sums
        .into_iter()
        .map(|(subject, (mut sum, count))| {
            let n = count as f64;
            sum.iter_mut().for_each(|x| *x /= n);
            let norm = norm(&sum);
            (
                subject,
                ClassCenter {
                    vector: sum,
                    count,
                    norm,
                },
            )
        })
        .collect();

    Ok(ClassCenterSet { mode, dim, centers })
}

/// Class-center similarity: cosine between an embedding and its own center.
pub fn ccs(z: &[f64], center: &[f64]) -> Result<f64> {
    cosine(z, center)
}

/// Largest cosine to any center other than `own`, with the attaining subject.
/// Ties resolve to the smallest subject id.
pub fn nnccs(z: &[f64], centers: &ClassCenterSet, own: SubjectId) -> Result<(f64, SubjectId)> {
    if z.len() != centers.dim {
        return Err(Error::DimensionMismatch {
            expected: centers.dim,
            found: z.len(),
        });
    }
    let nz = norm(z);
    if !(nz > 0.0 && nz.is_finite()) {
        return Err(Error::DegenerateVector);
    }
    let mut best: Option<(f64, SubjectId)> = None;
    for (subject, center) in centers.iter() {
        if subject == own {
            continue;
        }
        if !(center.norm > 0.0) {
            return Err(Error::DegenerateVector);
        }
        let sim = cosine_with_norms(z, nz, &center.vector, center.norm);
        match best {
            Some((b, _)) if sim <= b => {}
            _ => best = Some((sim, subject)),
        }
    }
    best.ok_or(Error::NoImpostor)
}

/// Certainty ratio `ccs / (nnccs + 1 + ε)`.
pub fn certainty_ratio(ccs: f64, nnccs: f64) -> f64 {
    ccs / (nnccs + 1.0 + CR_EPSILON)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedScores {
    pub ccs: f64,
    pub nnccs: f64,
    pub ccas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLabel {
    pub sample: SampleId,
    pub subject: SubjectId,
    pub ccs: f64,
    pub nnccs: f64,
    pub ccas: f64,
    pub cr: f64,
    pub nearest_impostor: SubjectId,
    pub calibrated: Option<CalibratedScores>,
}

impl SampleLabel {
    pub fn from_similarities(
        sample: SampleId,
        subject: SubjectId,
        ccs: f64,
        nnccs: f64,
        nearest_impostor: SubjectId,
    ) -> Self {
        SampleLabel {
            sample,
            subject,
            ccs,
            nnccs,
            ccas: ccs - nnccs,
            cr: certainty_ratio(ccs, nnccs),
            nearest_impostor,
            calibrated: None,
        }
    }
}

/// Labels for a dataset, ordered by ascending sample id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecognizabilityLabels {
    rows: Vec<SampleLabel>,
}

impl RecognizabilityLabels {
    /// Sorts by sample id and rejects duplicates.
    pub fn from_rows(mut rows: Vec<SampleLabel>) -> Result<Self> {
        rows.sort_by_key(|r| r.sample);
        if let Some(w) = rows.windows(2).find(|w| w[0].sample == w[1].sample) {
            return Err(Error::DuplicateSampleId(w[0].sample));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SampleLabel] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [SampleLabel] {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, sample: SampleId) -> Option<&SampleLabel> {
        self.rows
            .binary_search_by_key(&sample, |r| r.sample)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn has_calibration(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.calibrated.is_some())
    }
}

fn label_one(record: &EmbeddingRecord, centers: &ClassCenterSet) -> Result<SampleLabel> {
    if !is_usable(&record.vector) {
        return Err(Error::DegenerateVector);
    }
    let own = centers
        .get(record.subject)
        .ok_or(Error::MissingCenter(record.subject))?;
    let ccs = ccs(&record.vector, &own.vector)?;
    let (nnccs, nearest) = nnccs(&record.vector, centers, record.subject)?;
    Ok(SampleLabel::from_similarities(
        record.sample,
        record.subject,
        ccs,
        nnccs,
        nearest,
    ))
}

/// Computes CCS, NNCCS, CCAS and CR for every record against `centers`.
///
/// Work is spread over the rayon pool; the result is ordered by sample id
/// and does not depend on the thread count.
pub fn label_dataset(
    records: &[EmbeddingRecord],
    centers: &ClassCenterSet,
) -> Result<RecognizabilityLabels> {
    let rows = records
        .par_iter()
        .map(|r| label_one(r, centers).map_err(|e| e.at_sample(r.sample)))
        .collect::<Result<Vec<_>>>()?;
    RecognizabilityLabels::from_rows(rows)
}
