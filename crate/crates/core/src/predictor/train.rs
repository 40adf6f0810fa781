//! Training loop with subject-disjoint validation and checkpoint selection by
//! validation Spearman correlation.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{mse_loss, RegressionHead};
use super::optim::{adamw_step, AdamWParams, OptimizerState};
use crate::error::{Error, Result};
use crate::evaluation::spearman;
use crate::labels::{RecognizabilityLabels, SampleLabel};
use crate::linalg::splitmix64;
use crate::types::{EmbeddingRecord, SampleId, SubjectId};

/// Which labels the head regresses. The first output is the "primary" label
/// used for validation Spearman.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// `(CCS, CCAS)`.
    Joint,
    CcsOnly,
    CcasOnly,
    CrOnly,
}

impl LabelMode {
    pub fn outputs(self) -> usize {
        match self {
            LabelMode::Joint => 2,
            _ => 1,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LabelMode::Joint => 0,
            LabelMode::CcsOnly => 1,
            LabelMode::CcasOnly => 2,
            LabelMode::CrOnly => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => LabelMode::Joint,
            1 => LabelMode::CcsOnly,
            2 => LabelMode::CcasOnly,
            3 => LabelMode::CrOnly,
            other => return Err(Error::Config(format!("unknown label mode code {other}"))),
        })
    }
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(LabelMode::Joint),
            "ccs_only" => Ok(LabelMode::CcsOnly),
            "ccas_only" => Ok(LabelMode::CcasOnly),
            "cr_only" => Ok(LabelMode::CrOnly),
            other => Err(Error::Config(format!("unknown label mode {other:?}"))),
        }
    }
}

/// Raw labels or their sigmoid-calibrated counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    #[default]
    Raw,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub label_mode: LabelMode,
    pub targets: TargetSource,
    pub validation_fraction: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            label_mode: LabelMode::Joint,
            targets: TargetSource::Raw,
            validation_fraction: 0.2,
            hidden: vec![256, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.targets == TargetSource::Calibrated && self.label_mode == LabelMode::CrOnly {
            return bad("cr_only has no calibrated target");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

fn targets_for(label: &SampleLabel, mode: LabelMode, source: TargetSource) -> Result<Vec<f64>> {
    let (ccs, ccas) = match source {
        TargetSource::Raw => (label.ccs, label.ccas),
        TargetSource::Calibrated => {
            let c = label.calibrated.ok_or(Error::MissingScore {
                sample: label.sample,
                kind: "calibrated",
            })?;
            (c.ccs, c.ccas)
        }
    };
    Ok(match mode {
        LabelMode::Joint => vec![ccs, ccas],
        LabelMode::CcsOnly => vec![ccs],
        LabelMode::CcasOnly => vec![ccas],
        LabelMode::CrOnly => vec![label.cr],
    })
}

/// Subjects assigned to validation: the `round(fraction * n)` subjects with
/// the smallest SplitMix64 hash of `id ^ splitmix64(seed)`, kept between one
/// and `n - 1` when `0 < fraction < 1` and there are at least two subjects.
pub fn split_subjects(
    subjects: impl IntoIterator<Item = SubjectId>,
    fraction: f64,
    seed: u64,
) -> BTreeSet<SubjectId> {
    let salt = splitmix64(seed);
    let mut keyed: Vec<(u64, SubjectId)> = subjects
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|s| (splitmix64(s.0 ^ salt), s))
        .collect();
    keyed.sort_unstable();
    let n = keyed.len();
    let mut take = (fraction * n as f64).round() as usize;
    if fraction > 0.0 && fraction < 1.0 && n >= 2 {
        take = take.clamp(1, n - 1);
    }
    keyed
        .into_iter()
        .take(take.min(n))
        .map(|(_, s)| s)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training-split loss after the epoch's updates.
    pub train_loss: f64,
    pub validation_spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains a fresh head and returns the parameters from the epoch with the
/// highest validation Spearman (earliest on ties).
///
/// Constant head output makes Spearman undefined; such epochs are recorded
/// as 0.
pub fn train(
    records: &[EmbeddingRecord],
    labels: &RecognizabilityLabels,
    config: &TrainConfig,
) -> Result<(RegressionHead, TrainHistory)> {
    config.validate()?;
    let dim = crate::types::validate_records(records)?;

    let validation_subjects = split_subjects(
        records.iter().map(|r| r.subject),
        config.validation_fraction,
        config.seed,
    );
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut val_x = Vec::new();
    let mut val_y = Vec::new();
    let mut ordered: Vec<&EmbeddingRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.sample);
    for r in ordered {
        let label = labels.get(r.sample).ok_or(Error::MissingScore {
            sample: r.sample,
            kind: "label",
        })?;
        let t = targets_for(label, config.label_mode, config.targets)?;
        if validation_subjects.contains(&r.subject) {
            val_x.push(r.vector.as_slice());
            val_y.push(t);
        } else {
            train_x.push(r.vector.as_slice());
            train_y.push(t);
        }
    }
    if val_x.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    if train_x.len() < config.batch_size {
        return Err(Error::Config(format!(
            "{} training samples is fewer than batch size {}",
            train_x.len(),
            config.batch_size
        )));
    }
    let val_primary: Vec<f64> = val_y.iter().map(|t| t[0]).collect();
    if val_primary.iter().all(|&v| v == val_primary[0]) {
        return Err(Error::DegenerateTarget);
    }

    let mut head = RegressionHead::init(
        dim,
        &config.hidden,
        config.label_mode.outputs(),
        config.seed,
    )?;
    let mut state = OptimizerState::new(&head);
    let opt = config.adamw();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x5348_5546_464c_4521));
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, RegressionHead)> = None;
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| train_x[i]));
            batch_y.extend(chunk.iter().map(|&i| train_y[i].as_slice()));
            let (loss, grads) = head.backward(&batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adamw_step(&mut head, &mut state, &grads, &opt)?;
        }

        let train_loss = mse_loss(&head.forward(&train_x)?, &train_y)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let val_pred: Vec<f64> = head.forward(&val_x)?.iter().map(|p| p[0]).collect();
        let rho = match spearman(&val_pred, &val_primary) {
            Ok(r) => r,
            Err(Error::UndefinedCorrelation) => 0.0,
            Err(e) => return Err(e),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_spearman: rho,
        });
        if best.as_ref().is_none_or(|(b, _)| rho > *b) {
            best = Some((rho, head.clone()));
            history.best_epoch = epoch;
        }
    }

    let (_, best_head) = best.expect("at least one epoch");
    Ok((best_head, history))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedScores {
    pub sample: SampleId,
    pub ccs: Option<f64>,
    pub ccas: Option<f64>,
    pub cr: Option<f64>,
}

/// Head outputs per sample, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub mode: LabelMode,
    pub source: TargetSource,
    pub rows: Vec<PredictedScores>,
}

impl Predictions {
    pub fn get(&self, sample: SampleId) -> Option<&PredictedScores> {
        self.rows.iter().find(|r| r.sample == sample)
    }

    /// Lookup table keyed by sample id.
    pub fn index(&self) -> HashMap<SampleId, PredictedScores> {
        self.rows.iter().map(|r| (r.sample, *r)).collect()
    }
}

pub fn predict(
    head: &RegressionHead,
    mode: LabelMode,
    source: TargetSource,
    records: &[EmbeddingRecord],
) -> Result<Predictions> {
    if head.output_dim() != mode.outputs() {
        return Err(Error::Shape(format!(
            "head has {} outputs, label mode needs {}",
            head.output_dim(),
            mode.outputs()
        )));
    }
    let inputs: Vec<&[f64]> = records.iter().map(|r| r.vector.as_slice()).collect();
    let outputs = head.forward(&inputs)?;
    let rows = records
        .iter()
        .zip(outputs)
        .map(|(r, o)| {
            let mut p = PredictedScores {
                sample: r.sample,
                ccs: None,
                ccas: None,
                cr: None,
            };
            match mode {
                LabelMode::Joint => {
                    p.ccs = Some(o[0]);
                    p.ccas = Some(o[1]);
                }
                LabelMode::CcsOnly => p.ccs = Some(o[0]),
                LabelMode::CcasOnly => p.ccas = Some(o[0]),
                LabelMode::CrOnly => p.cr = Some(o[0]),
            }
            p
        })
        .collect();
    Ok(Predictions { mode, source, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{compute_class_centers, label_dataset, CenterMode};
    use crate::synth::{generate, SynthConfig};

    fn small_data() -> (Vec<EmbeddingRecord>, RecognizabilityLabels) {
        let cfg = SynthConfig {
            num_classes: 30,
            gallery_per_class: 4,
            probe_per_class: 6,
            dim: 16,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let centers = compute_class_centers(&ds.records, CenterMode::GalleryOnly).unwrap();
        let labels = label_dataset(&ds.records, &centers).unwrap();
        (ds.records, labels)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            hidden: vec![16],
            validation_fraction: 0.3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn history_bookkeeping() {
        let (records, labels) = small_data();
        let (_, hist) = train(&records, &labels, &quick(6)).unwrap();
        assert_eq!(hist.epochs.len(), 6);
        let best = hist.epochs[hist.best_epoch].validation_spearman;
        assert!(hist.epochs.iter().all(|e| e.validation_spearman <= best));
        let first_best = hist
            .epochs
            .iter()
            .position(|e| e.validation_spearman == best)
            .unwrap();
        assert_eq!(first_best, hist.best_epoch);
    }

    #[test]
    fn training_is_reproducible() {
        let (records, labels) = small_data();
        let a = train(&records, &labels, &quick(3)).unwrap();
        let b = train(&records, &labels, &quick(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_targets_are_degenerate() {
        let (records, labels) = small_data();
        let rows: Vec<SampleLabel> = labels
            .rows()
            .iter()
            .map(|r| SampleLabel { ccs: 0.5, ..*r })
            .collect();
        let flat = RecognizabilityLabels::from_rows(rows).unwrap();
        let cfg = TrainConfig {
            label_mode: LabelMode::CcsOnly,
            ..quick(1)
        };
        assert!(matches!(
            train(&records, &flat, &cfg),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn batch_larger_than_training_split() {
        let (records, labels) = small_data();
        let cfg = TrainConfig {
            batch_size: 10_000,
            ..quick(1)
        };
        assert!(matches!(
            train(&records, &labels, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (records, labels) = small_data();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            ..quick(5)
        };
        assert!(matches!(
            train(&records, &labels, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn full_batch_linear_head_loss_does_not_increase() {
        let (records, labels) = small_data();
        let probe = TrainConfig {
            hidden: vec![],
            learning_rate: 1e-4,
            weight_decay: 0.0,
            ..quick(1)
        };
        let val = split_subjects(records.iter().map(|r| r.subject), 0.3, 0);
        let n_train = records.iter().filter(|r| !val.contains(&r.subject)).count();
        let cfg = TrainConfig {
            batch_size: n_train,
            epochs: 25,
            ..probe
        };
        let (_, hist) = train(&records, &labels, &cfg).unwrap();
        for w in hist.epochs.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss, "{:?}", hist.epochs);
        }
    }

    #[test]
    fn validation_split_is_subject_disjoint_and_stable() {
        let subjects: Vec<SubjectId> = (0..500).map(SubjectId).collect();
        let a = split_subjects(subjects.iter().copied(), 0.2, 3);
        let b = split_subjects(subjects.iter().copied(), 0.2, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert_ne!(a, split_subjects(subjects.iter().copied(), 0.2, 4));
        // small sets keep both sides non-empty
        let few: Vec<SubjectId> = (0..3).map(SubjectId).collect();
        assert_eq!(split_subjects(few.iter().copied(), 0.01, 0).len(), 1);
        assert_eq!(split_subjects(few.iter().copied(), 0.99, 0).len(), 2);
        assert!(split_subjects(few.iter().copied(), 0.0, 0).is_empty());
    }

    #[test]
    fn predict_is_deterministic_and_zero_head_is_zero() {
        let (records, _) = small_data();
        let head = RegressionHead::zeros(16, &[8], 2).unwrap();
        let a = predict(&head, LabelMode::Joint, TargetSource::Raw, &records).unwrap();
        let b = predict(&head, LabelMode::Joint, TargetSource::Raw, &records).unwrap();
        assert_eq!(a, b);
        assert!(a
            .rows
            .iter()
            .all(|r| r.ccs == Some(0.0) && r.ccas == Some(0.0)));
        assert_eq!(a.rows[3].sample, records[3].sample);
        assert!(predict(&head, LabelMode::CcsOnly, TargetSource::Raw, &records).is_err());
    }
}
