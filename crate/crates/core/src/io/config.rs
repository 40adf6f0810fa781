//! Flat TOML run configuration.
//!
//! Every tunable of every stage lives at the top level of one document.
//! Unknown keys are rejected. [`RunConfig::echo`] renders the fully resolved
//! configuration, defaults included, so a run can be reproduced from its echo
//! alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationPolicy, PolicyKind};
use crate::error::{Error, Result};
use crate::labels::CenterMode;
use crate::predictor::{LabelMode, TargetSource, TrainConfig};
use crate::synth::{QualityLaw, SynthConfig, TemplateSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLawName {
    Uniform,
    TwoRegime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrigin {
    /// Ground-truth labels.
    Gt,
    /// Head predictions.
    Pred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterChoice {
    Gallery,
    Full,
}

impl From<CenterChoice> for CenterMode {
    fn from(c: CenterChoice) -> Self {
        match c {
            CenterChoice::Gallery => CenterMode::GalleryOnly,
            CenterChoice::Full => CenterMode::FullSet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub head: Option<PathBuf>,

    // synthetic data
    pub num_classes: usize,
    pub gallery_per_class: usize,
    pub probe_per_class: usize,
    pub dim: usize,
    pub quality_law: QualityLawName,
    pub min_noise: f64,
    pub max_noise: f64,
    pub clean_fraction: f64,
    pub clean_noise: f64,
    pub degraded_noise: f64,
    pub nuisance_dim: usize,
    pub nuisance_share: f64,
    pub confusion: f64,
    pub template_min: usize,
    pub template_max: usize,
    pub saturation_mode: bool,
    pub cap_width: f64,
    pub axis_seed: u64,

    // labels
    pub centers: CenterChoice,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub label_mode: LabelMode,
    pub targets: TargetSource,
    pub validation_fraction: f64,
    pub hidden: Vec<usize>,

    // aggregation
    pub policy: PolicyKind,
    /// Filter cutoff; the policy's own default when absent.
    pub cutoff: Option<f64>,
    pub weight_floor: f64,
    pub score: ScoreOrigin,

    // evaluation
    pub target_fmrs: Vec<f64>,
    pub grid: usize,
    pub quality: Vec<String>,
    /// Impostor references sampled per probe; all of them when absent.
    pub impostors_per_probe: Option<usize>,
    pub roc_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        let (clean_fraction, clean_noise, degraded_noise) = match synth.quality_law {
            QualityLaw::TwoRegime {
                clean_fraction,
                clean_noise,
                degraded_noise,
            } => (clean_fraction, clean_noise, degraded_noise),
            QualityLaw::Uniform { .. } => unreachable!("default law is two-regime"),
        };
        RunConfig {
            seed: synth.seed,
            input: None,
            output: None,
            labels: None,
            predictions: None,
            head: None,
            num_classes: synth.num_classes,
            gallery_per_class: synth.gallery_per_class,
            probe_per_class: synth.probe_per_class,
            dim: synth.dim,
            quality_law: QualityLawName::TwoRegime,
            min_noise: clean_noise,
            max_noise: degraded_noise,
            clean_fraction,
            clean_noise,
            degraded_noise,
            nuisance_dim: synth.nuisance_dim,
            nuisance_share: synth.nuisance_share,
            confusion: synth.confusion,
            template_min: synth.template_size.min,
            template_max: synth.template_size.max,
            saturation_mode: synth.saturation_mode,
            cap_width: synth.cap_width,
            axis_seed: synth.axis_seed,
            centers: CenterChoice::Gallery,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_epsilon: train.adam_epsilon,
            label_mode: train.label_mode,
            targets: train.targets,
            validation_fraction: train.validation_fraction,
            hidden: train.hidden,
            policy: PolicyKind::CcasFilterPlusCcsWeight,
            cutoff: None,
            weight_floor: crate::aggregation::DEFAULT_WEIGHT_FLOOR,
            score: ScoreOrigin::Pred,
            target_fmrs: vec![1e-4, 1e-3, 1e-2, 1e-1],
            grid: 101,
            quality: Vec::new(),
            impostors_per_probe: None,
            roc_points: 200,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = super::read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))?;
        Self::parse(&text)
    }

    /// Fills in policy-dependent defaults so the echo is explicit.
    pub fn resolved(mut self) -> Self {
        if self.cutoff.is_none() {
            self.cutoff = Some(self.policy.default_cutoff());
        }
        self
    }

    pub fn echo(&self) -> Result<String> {
        toml::to_string(&self.clone().resolved()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_classes: self.num_classes,
            gallery_per_class: self.gallery_per_class,
            probe_per_class: self.probe_per_class,
            dim: self.dim,
            quality_law: match self.quality_law {
                QualityLawName::Uniform => QualityLaw::Uniform {
                    min_noise: self.min_noise,
                    max_noise: self.max_noise,
                },
                QualityLawName::TwoRegime => QualityLaw::TwoRegime {
                    clean_fraction: self.clean_fraction,
                    clean_noise: self.clean_noise,
                    degraded_noise: self.degraded_noise,
                },
            },
            nuisance_dim: self.nuisance_dim,
            nuisance_share: self.nuisance_share,
            confusion: self.confusion,
            template_size: TemplateSize {
                min: self.template_min,
                max: self.template_max,
            },
            saturation_mode: self.saturation_mode,
            cap_width: self.cap_width,
            seed: self.seed,
            axis_seed: self.axis_seed,
        }
    }

    /// Copies the synthetic-data keys from `cfg`.
    pub fn with_synth(mut self, cfg: &SynthConfig) -> Self {
        self.num_classes = cfg.num_classes;
        self.gallery_per_class = cfg.gallery_per_class;
        self.probe_per_class = cfg.probe_per_class;
        self.dim = cfg.dim;
        match cfg.quality_law {
            QualityLaw::Uniform {
                min_noise,
                max_noise,
            } => {
                self.quality_law = QualityLawName::Uniform;
                self.min_noise = min_noise;
                self.max_noise = max_noise;
            }
            QualityLaw::TwoRegime {
                clean_fraction,
                clean_noise,
                degraded_noise,
            } => {
                self.quality_law = QualityLawName::TwoRegime;
                self.clean_fraction = clean_fraction;
                self.clean_noise = clean_noise;
                self.degraded_noise = degraded_noise;
            }
        }
        self.nuisance_dim = cfg.nuisance_dim;
        self.nuisance_share = cfg.nuisance_share;
        self.confusion = cfg.confusion;
        self.template_min = cfg.template_size.min;
        self.template_max = cfg.template_size.max;
        self.saturation_mode = cfg.saturation_mode;
        self.cap_width = cfg.cap_width;
        self.seed = cfg.seed;
        self.axis_seed = cfg.axis_seed;
        self
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            seed: self.seed,
            label_mode: self.label_mode,
            targets: self.targets,
            validation_fraction: self.validation_fraction,
            hidden: self.hidden.clone(),
        }
    }

    pub fn aggregation(&self) -> AggregationPolicy {
        AggregationPolicy {
            kind: self.policy,
            cutoff: self.cutoff.unwrap_or(self.policy.default_cutoff()),
            weight_floor: self.weight_floor,
        }
    }
}
