//! Verification comparisons, ROC curves and TAR at a fixed FMR.
//!
//! A comparison is accepted when `score >= threshold`.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::TemplateVector;
use crate::error::{Error, Result};
use crate::labels::ClassCenterSet;
use crate::linalg::{cosine_with_norms, norm, splitmix64};
use crate::types::{EmbeddingRecord, Role, SubjectId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Gallery-side templates against probe-side templates.
    GalleryVsProbeTemplates,
    /// Each probe image against every gallery class center.
    ProbeImageVsGalleryCenter,
}

/// One side of a comparison.
#[derive(Debug, Clone, Copy)]
pub struct Comparand<'a> {
    pub subject: SubjectId,
    /// Template id, sample id or subject id, depending on the pairing.
    pub id: u64,
    pub vector: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub score: f64,
    pub genuine: bool,
    pub probe: u64,
    pub reference: u64,
}

/// Optional seeded subsampling of impostor references per probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpostorSampling {
    pub per_probe: usize,
    pub seed: u64,
}

/// Cosine score for every (probe, reference) pair, probes in input order
/// and references in input order within each probe. Genuine pairs share a
/// subject.
pub fn verification_scores(
    references: &[Comparand],
    probes: &[Comparand],
    sampling: Option<ImpostorSampling>,
) -> Result<Vec<ScorePair>> {
    use std::collections::BTreeMap;
    let mut sides: BTreeMap<SubjectId, (bool, bool)> = BTreeMap::new();
    for r in references {
        sides.entry(r.subject).or_default().0 = true;
    }
    for p in probes {
        sides.entry(p.subject).or_default().1 = true;
    }
    if sides.len() < 2 {
        return Err(Error::Config(
            "verification needs at least two subjects".into(),
        ));
    }
    if let Some((s, _)) = sides.iter().find(|(_, (r, p))| !(*r && *p)) {
        return Err(Error::Pairing(*s));
    }
    let dim = references[0].vector.len();
    let mut ref_norms = Vec::with_capacity(references.len());
    for r in references.iter() {
        if r.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.vector.len(),
            });
        }
        let n = norm(r.vector);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateVector);
        }
        ref_norms.push(n);
    }

    let per_probe = probes
        .par_iter()
        .map(|p| {
            if p.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.vector.len(),
                });
            }
            let pn = norm(p.vector);
            if !(pn > 0.0 && pn.is_finite()) {
                return Err(Error::DegenerateVector);
            }
            let score = |i: usize| ScorePair {
                score: cosine_with_norms(p.vector, pn, references[i].vector, ref_norms[i]),
                genuine: references[i].subject == p.subject,
                probe: p.id,
                reference: references[i].id,
            };
            let out: Vec<ScorePair> = match sampling {
                None => (0..references.len()).map(score).collect(),
                Some(s) => {
                    let impostors: Vec<usize> = (0..references.len())
                        .filter(|&i| references[i].subject != p.subject)
                        .collect();
                    let mut keep: Vec<usize> = if impostors.len() <= s.per_probe {
                        impostors
                    } else {
                        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(s.seed ^ p.id));
                        sample_indices(&mut rng, impostors.len(), s.per_probe)
                            .into_iter()
                            .map(|k| impostors[k])
                            .collect()
                    };
                    keep.extend(
                        (0..references.len()).filter(|&i| references[i].subject == p.subject),
                    );
                    keep.sort_unstable();
                    keep.into_iter().map(score).collect()
                }
            };
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_probe.into_iter().flatten().collect())
}

/// Gallery-side templates are references, probe-side templates are probes.
pub fn template_pairs(templates: &[TemplateVector]) -> Result<Vec<ScorePair>> {
    let side = |role: Role| -> Vec<Comparand> {
        templates
            .iter()
            .filter(|t| t.side == role)
            .map(|t| Comparand {
                subject: t.subject,
                id: t.template.0,
                vector: &t.vector,
            })
            .collect()
    };
    let (refs, probes) = (side(Role::Gallery), side(Role::Probe));
    if refs.is_empty() || probes.is_empty() {
        return Err(Error::EmptyInput(
            "templates on both gallery and probe sides",
        ));
    }
    verification_scores(&refs, &probes, None)
}

/// Probe-role records against class centers (reference id = subject id).
pub fn image_center_pairs(
    records: &[EmbeddingRecord],
    centers: &ClassCenterSet,
    sampling: Option<ImpostorSampling>,
) -> Result<Vec<ScorePair>> {
    let refs: Vec<Comparand> = centers
        .iter()
        .map(|(s, c)| Comparand {
            subject: s,
            id: s.0,
            vector: &c.vector,
        })
        .collect();
    let probes: Vec<Comparand> = records
        .iter()
        .filter(|r| r.role == Role::Probe)
        .map(|r| Comparand {
            subject: r.subject,
            id: r.sample.0,
            vector: &r.vector,
        })
        .collect();
    if refs.is_empty() || probes.is_empty() {
        return Err(Error::EmptyInput("class centers and probe records"));
    }
    verification_scores(&refs, &probes, sampling)
}

pub fn split_scores(pairs: &[ScorePair]) -> (Vec<f64>, Vec<f64>) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for p in pairs {
        if p.genuine {
            genuine.push(p.score)
        } else {
            impostor.push(p.score)
        }
    }
    (genuine, impostor)
}

/// Smallest float strictly greater than `x` (finite `x`).
pub(crate) fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarAtFmr {
    pub target_fmr: f64,
    pub tar: f64,
    pub threshold: f64,
    /// FMR actually realized at `threshold`.
    pub fmr: f64,
    /// The target is finer than one impostor out of the pool; the threshold
    /// sits just above the highest impostor score.
    pub resolution_limited: bool,
}

/// Largest impostor count `k` with `k / n <= fmr`.
fn allowed_false_matches(fmr: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((fmr * nf).floor() as usize).min(n);
    while k < n && (k + 1) as f64 / nf <= fmr {
        k += 1;
    }
    while k > 0 && k as f64 / nf > fmr {
        k -= 1;
    }
    k
}

/// Threshold from impostor scores sorted in descending order.
pub(crate) fn threshold_from_sorted(desc: &[f64], fmr: f64) -> (f64, bool) {
    let k = allowed_false_matches(fmr, desc.len());
    let above_max = next_up(desc[0]);
    if k == 0 {
        return (above_max, true);
    }
    if k == desc.len() {
        return (desc[k - 1], false);
    }
    // Smallest impostor score strictly above the first rejected one.
    let boundary = desc[k];
    match desc[..k].iter().rposition(|&v| v > boundary) {
        Some(j) => (desc[j], false),
        None => (above_max, false),
    }
}

fn check_fmr(fmr: f64) -> Result<()> {
    if !(fmr > 0.0 && fmr < 1.0) {
        return Err(Error::Config(format!(
            "target FMR {fmr} must lie in (0, 1)"
        )));
    }
    Ok(())
}

fn sorted_desc(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("non-finite comparison score".into()));
    }
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Empirical TAR at the smallest impostor score whose false-match fraction
/// does not exceed `fmr_target`. No interpolation.
pub fn tar_at_fmr(pairs: &[ScorePair], fmr_target: f64) -> Result<TarAtFmr> {
    let (genuine, impostor) = split_scores(pairs);
    tar_at_fmr_scores(&genuine, &impostor, fmr_target)
}

pub fn tar_at_fmr_scores(genuine: &[f64], impostor: &[f64], fmr_target: f64) -> Result<TarAtFmr> {
    check_fmr(fmr_target)?;
    if impostor.is_empty() {
        return Err(Error::EmptyInput("impostor comparisons"));
    }
    if genuine.is_empty() {
        return Err(Error::EmptyInput("genuine comparisons"));
    }
    let desc = sorted_desc(impostor)?;
    let (threshold, resolution_limited) = threshold_from_sorted(&desc, fmr_target);
    let accepted_imp = desc.iter().take_while(|&&s| s >= threshold).count();
    let accepted_gen = genuine.iter().filter(|&&s| s >= threshold).count();
    Ok(TarAtFmr {
        target_fmr: fmr_target,
        tar: accepted_gen as f64 / genuine.len() as f64,
        threshold,
        fmr: accepted_imp as f64 / desc.len() as f64,
        resolution_limited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub tar: f64,
}

/// Operating points at every distinct score, thresholds ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn from_pairs(pairs: &[ScorePair]) -> Result<Self> {
        let (mut genuine, mut impostor) = split_scores(pairs);
        if genuine.is_empty() || impostor.is_empty() {
            return Err(Error::EmptyInput("genuine and impostor comparisons"));
        }
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
        let (mut gi, mut ii) = (0usize, 0usize);
        let points = thresholds
            .into_iter()
            .map(|t| {
                while gi < genuine.len() && genuine[gi] < t {
                    gi += 1;
                }
                while ii < impostor.len() && impostor[ii] < t {
                    ii += 1;
                }
                RocPoint {
                    threshold: t,
                    fmr: (impostor.len() - ii) as f64 / ni,
                    tar: (genuine.len() - gi) as f64 / ng,
                }
            })
            .collect();
        Ok(RocCurve { points })
    }

    /// At most `max_points` points, evenly spaced in index, keeping both ends.
    pub fn thinned(&self, max_points: usize) -> RocCurve {
        let n = self.points.len();
        if n <= max_points || max_points < 2 {
            return self.clone();
        }
        let points = (0..max_points)
            .map(|i| self.points[i * (n - 1) / (max_points - 1)])
            .collect();
        RocCurve { points }
    }
}
