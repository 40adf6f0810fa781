//! Sigmoid calibration for saturated similarity pools.
//!
//! Some encoders put almost every CCS and NNCCS value near one, which leaves
//! CCAS with no usable spread. A single logistic
//! `s(x) = 1 / (1 + exp(-(x - offset) / scale))` is fitted so that CCS values
//! map toward 1 and NNCCS values toward 0, by minimizing the Brier score of
//! that pooled two-class problem. One shared map keeps the transform strictly
//! increasing, so the sign of CCAS and every rank order survive calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CalibratedScores, RecognizabilityLabels};

/// Lower bound on the logistic scale.
pub const MIN_SCALE: f64 = 1e-6;

/// Upper bound on the logistic scale, in pooled standard deviations. When
/// the two pools overlap completely the Brier optimum is a flat 0.5; the
/// bound keeps the map strictly increasing in floating point instead.
pub const MAX_SCALE_SDS: f64 = 1e3;

const MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub offset: f64,
    pub scale: f64,
    /// Brier score on the fitting pool.
    pub brier: f64,
}

impl CalibrationParams {
    pub fn apply(&self, x: f64) -> f64 {
        logistic((x - self.offset) / self.scale)
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Brier score of classifying `positives` as 1 and `negatives` as 0.
pub fn brier_score(offset: f64, scale: f64, positives: &[f64], negatives: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &x in positives {
        sum += (logistic((x - offset) / scale) - 1.0).powi(2);
    }
    for &x in negatives {
        sum += logistic((x - offset) / scale).powi(2);
    }
    sum / (positives.len() + negatives.len()) as f64
}

/// Brier score plus the Gauss-Newton system `(JᵀJ, Jᵀr)` in
/// (offset, ln scale), for values already standardized.
fn brier_system(
    offset: f64,
    log_scale: f64,
    pos: &[f64],
    neg: &[f64],
) -> (f64, [f64; 3], [f64; 2]) {
    let scale = log_scale.exp();
    let m = (pos.len() + neg.len()) as f64;
    let mut loss = 0.0;
    let mut jtj = [0.0; 3];
    let mut jtr = [0.0; 2];
    let mut visit = |x: f64, target: f64| {
        let u = (x - offset) / scale;
        let s = logistic(u);
        let r = s - target;
        let ds = s * (1.0 - s);
        let j = [-ds / scale, -ds * u];
        loss += r * r;
        jtj[0] += j[0] * j[0];
        jtj[1] += j[0] * j[1];
        jtj[2] += j[1] * j[1];
        jtr[0] += j[0] * r;
        jtr[1] += j[1] * r;
    };
    pos.iter().for_each(|&x| visit(x, 1.0));
    neg.iter().for_each(|&x| visit(x, 0.0));
    (loss / m, jtj, jtr)
}

/// Fits the shared logistic by minimizing the Brier score.
///
/// The fit runs Levenberg-Marquardt on (offset, ln scale) after
/// standardizing the pool by its mean and standard deviation, starting from
/// offset = mean, scale = std. The scale is kept within [`MIN_SCALE`] and
/// [`MAX_SCALE_SDS`] standard deviations.
pub fn fit_sigmoid_calibration(labels: &RecognizabilityLabels) -> Result<CalibrationParams> {
    if labels.len() < 2 {
        return Err(Error::CalibrationDegenerate("need at least two samples"));
    }
    let pos: Vec<f64> = labels.rows().iter().map(|r| r.ccs).collect();
    let neg: Vec<f64> = labels.rows().iter().map(|r| r.nnccs).collect();
    fit_pools(&pos, &neg)
}

/// Same fit on explicit pools.
pub fn fit_pools(pos: &[f64], neg: &[f64]) -> Result<CalibrationParams> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::CalibrationDegenerate("empty pool"));
    }
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(Error::CalibrationDegenerate("non-finite value in pool"));
    }
    let pooled: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let first = pooled[0];
    if pooled.iter().all(|&x| x == first) {
        return Err(Error::CalibrationDegenerate("all pooled values are equal"));
    }
    let (mean, var) = crate::linalg::mean_var(&pooled);
    let sd = var.sqrt();
    let zp: Vec<f64> = pos.iter().map(|x| (x - mean) / sd).collect();
    let zn: Vec<f64> = neg.iter().map(|x| (x - mean) / sd).collect();

    let min_log = (MIN_SCALE / sd).ln();
    let max_log = MAX_SCALE_SDS.ln();
    let mut theta = [0.0, 0.0f64.max(min_log)];
    let (mut loss, mut jtj, mut jtr) = brier_system(theta[0], theta[1], &zp, &zn);
    let mut lambda = 1e-3;
    let mut stalled = 0;
    for _ in 0..MAX_ITERS {
        let a = jtj[0] * (1.0 + lambda) + 1e-300;
        let c = jtj[2] * (1.0 + lambda) + 1e-300;
        let b = jtj[1];
        let det = a * c - b * b;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        let step = [
            (-c * jtr[0] + b * jtr[1]) / det,
            (b * jtr[0] - a * jtr[1]) / det,
        ];
        let cand = [
            theta[0] + step[0],
            (theta[1] + step[1]).clamp(min_log, max_log),
        ];
        let (l, j2, r2) = brier_system(cand[0], cand[1], &zp, &zn);
        if l < loss {
            let gain = loss - l;
            theta = cand;
            loss = l;
            jtj = j2;
            jtr = r2;
            lambda = (lambda / 3.0).max(1e-12);
            stalled = if gain <= 1e-15 * loss.max(1e-300) {
                stalled + 1
            } else {
                0
            };
            if stalled >= 3 {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
    }

    let offset = mean + sd * theta[0];
    let scale = (sd * theta[1].exp()).max(MIN_SCALE);
    Ok(CalibrationParams {
        offset,
        scale,
        brier: brier_score(offset, scale, pos, neg),
    })
}

/// Fills the calibrated columns of every label.
pub fn apply_calibration(
    params: &CalibrationParams,
    labels: &RecognizabilityLabels,
) -> RecognizabilityLabels {
    let mut out = labels.clone();
    for row in out.rows_mut() {
        let ccs = params.apply(row.ccs);
        let nnccs = params.apply(row.nnccs);
        row.calibrated = Some(CalibratedScores {
            ccs,
            nnccs,
            ccas: ccs - nnccs,
        });
    }
    out
}
