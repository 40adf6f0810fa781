//! Error-versus-reject characteristic.
//!
//! The decision threshold is fixed once on the full comparison set at the
//! target FMR. Genuine comparisons are then discarded lowest-quality first
//! and the FNMR of what remains is traced against the discarded fraction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::roc::{split_scores, tar_at_fmr_scores, ScorePair};
use crate::error::{Error, Result};

/// A genuine comparison with the probe's quality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualifiedScore {
    pub score: f64,
    pub quality: f64,
    /// Tie-breaker for equal quality (ascending).
    pub probe: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErcPoint {
    pub discard_fraction: f64,
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErcCurve {
    pub target_fmr: f64,
    pub fixed_threshold: f64,
    pub points: Vec<ErcPoint>,
    /// Trapezoidal area under `points`.
    pub auc: f64,
    /// First grid fraction that left no genuine comparisons, if any.
    pub truncated_at: Option<f64>,
    pub resolution_limited: bool,
}

/// `points` fractions `0, 1/(points-1), ..., 1`.
pub fn uniform_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config("ERC grid needs at least two points".into()));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 / last).collect())
}

/// Number of genuine comparisons dropped at fraction `r` out of `n`.
pub fn discard_count(r: f64, n: usize) -> usize {
    ((r * n as f64 + 1e-9).floor() as usize).min(n)
}

pub fn trapezoid(points: &[ErcPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].discard_fraction - w[0].discard_fraction) * (w[0].fnmr + w[1].fnmr) / 2.0)
        .sum()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::Config("ERC grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::Config(
            "ERC grid must be strictly increasing within [0, 1]".into(),
        ));
    }
    Ok(())
}

pub fn erc(
    genuine: &[QualifiedScore],
    impostor: &[f64],
    target_fmr: f64,
    grid: &[f64],
) -> Result<ErcCurve> {
    check_grid(grid)?;
    if genuine.iter().any(|g| !g.quality.is_finite()) {
        return Err(Error::Config("non-finite quality score".into()));
    }
    let genuine_scores: Vec<f64> = genuine.iter().map(|g| g.score).collect();
    let op = tar_at_fmr_scores(&genuine_scores, impostor, target_fmr)?;
    let threshold = op.threshold;

    let mut ordered = genuine.to_vec();
    ordered.sort_by(|a, b| a.quality.total_cmp(&b.quality).then(a.probe.cmp(&b.probe)));

    // rejected_from[i] = false non-matches among ordered[i..]
    let n = ordered.len();
    let mut rejected_from = vec![0usize; n + 1];
    for i in (0..n).rev() {
        rejected_from[i] = rejected_from[i + 1] + usize::from(ordered[i].score < threshold);
    }

    let mut points = Vec::with_capacity(grid.len());
    let mut truncated_at = None;
    for &r in grid {
        let dropped = discard_count(r, n);
        let remaining = n - dropped;
        if remaining == 0 {
            truncated_at = Some(r);
            break;
        }
        points.push(ErcPoint {
            discard_fraction: r,
            fnmr: rejected_from[dropped] as f64 / remaining as f64,
        });
    }
    Ok(ErcCurve {
        target_fmr,
        fixed_threshold: threshold,
        auc: trapezoid(&points),
        points,
        truncated_at,
        resolution_limited: op.resolution_limited,
    })
}

/// Splits pairs and attaches `quality[probe]` to every genuine pair.
pub fn attach_quality(
    pairs: &[ScorePair],
    quality: &HashMap<u64, f64>,
) -> Result<(Vec<QualifiedScore>, Vec<f64>)> {
    let (_, impostor) = split_scores(pairs);
    let genuine = pairs
        .iter()
        .filter(|p| p.genuine)
        .map(|p| {
            quality
                .get(&p.probe)
                .map(|&q| QualifiedScore {
                    score: p.score,
                    quality: q,
                    probe: p.probe,
                })
                .ok_or(Error::MissingScore {
                    sample: crate::types::SampleId(p.probe),
                    kind: "quality",
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((genuine, impostor))
}
