//! Seeded synthetic embedding datasets with known class geometry and
//! per-sample quality.
//!
//! Each subject gets a unit class direction `u`. A sample of quality `q`
//! (in `[0, 1]`, higher is better) is
//!
//! ```text
//! z = normalize(u + c(q) * (v - u) + sigma(q) * (sqrt(1 - rho) * g / sqrt(d) + sqrt(rho) * B h / sqrt(m)))
//! ```
//!
//! with `g ~ N(0, I_d)`, `h ~ N(0, I_m)` and `B` an orthonormal `d x m` basis
//! of a "nuisance" subspace shared by all subjects. `sigma(q)` falls linearly
//! from the law's worst-case noise to its best-case noise as `q` rises, and
//! `rho` (`nuisance_share`) is the expected fraction of noise energy inside
//! the subspace. With `rho > 0` degraded samples of every subject spread
//! along the same few directions, the way degraded captures tend to share
//! nuisance structure in a real encoder's space; this is what makes quality
//! visible from the embedding alone on unseen subjects. Class directions are
//! then projected onto the orthogonal complement of the subspace, so
//! identity and nuisance do not overlap.
//!
//! `v` is the direction of the subject's most similar other subject and
//! `c(q) = confusion * (1 - q)`. Degraded samples thus drift toward a
//! look-alike: they keep a fairly high similarity to their own center while
//! their margin over the nearest impostor shrinks or flips sign. With
//! `confusion = 0` and `rho = 0` the model is plain isotropic Gaussian noise.
//!
//! Generators are ChaCha8 (`rand_chacha`). The cap axis and then the
//! nuisance basis (Gram-Schmidt on Gaussian draws) come from
//! `ChaCha8Rng::seed_from_u64(axis_seed)`; subject `k` draws from
//! `ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k)))`, so classes
//! can be generated in parallel without affecting the output. Two datasets
//! with different `seed` but the same `axis_seed` behave like disjoint
//! identity sets seen through the same encoder.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::RecognizabilityLabels;
use crate::linalg::{mean_var, norm, normalize, splitmix64};
use crate::types::{EmbeddingRecord, Role, SampleId, SubjectId, TemplateId};

/// How per-sample quality and noise scale are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum QualityLaw {
    /// `q ~ U(0, 1)`, noise from `max_noise` (q = 0) to `min_noise` (q = 1).
    Uniform { min_noise: f64, max_noise: f64 },
    /// A `clean_fraction` of samples has `q ~ U(0.75, 1)`, the rest
    /// `q ~ U(0, 0.25)`; noise interpolates from `degraded_noise` (q = 0) to
    /// `clean_noise` (q = 1).
    TwoRegime {
        clean_fraction: f64,
        clean_noise: f64,
        degraded_noise: f64,
    },
}

impl QualityLaw {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            QualityLaw::Uniform {
                min_noise,
                max_noise,
            } => (min_noise, max_noise),
            QualityLaw::TwoRegime {
                clean_noise,
                degraded_noise,
                ..
            } => (clean_noise, degraded_noise),
        }
    }

    /// Noise scale at quality `q`.
    pub fn noise_scale(&self, q: f64) -> f64 {
        let (best, worst) = self.bounds();
        worst + q * (best - worst)
    }

    fn draw_quality(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            QualityLaw::Uniform { .. } => rng.random::<f64>(),
            QualityLaw::TwoRegime { clean_fraction, .. } => {
                let clean = rng.random::<f64>() < clean_fraction;
                let u = rng.random::<f64>() * 0.25;
                if clean {
                    0.75 + u
                } else {
                    u
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.bounds();
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config("noise scales must be finite and >= 0".into()));
        }
        if let QualityLaw::TwoRegime { clean_fraction, .. } = *self {
            if !(0.0..=1.0).contains(&clean_fraction) {
                return Err(Error::Config("clean_fraction must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSize {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub gallery_per_class: usize,
    pub probe_per_class: usize,
    pub dim: usize,
    pub quality_law: QualityLaw,
    /// Dimension `m` of the shared nuisance subspace.
    pub nuisance_dim: usize,
    /// Expected fraction of noise energy inside the nuisance subspace.
    pub nuisance_share: f64,
    /// Pull of a sample toward a random impostor direction at `q = 0`; the
    /// pull falls linearly to zero at `q = 1`.
    pub confusion: f64,
    /// Each subject's gallery and probe samples are cut, in sample order,
    /// into consecutive templates of a size drawn uniformly from this range.
    pub template_size: TemplateSize,
    /// Draw class directions inside a narrow cap around a shared axis.
    pub saturation_mode: bool,
    /// Spread of class directions around the cap axis (saturation mode only).
    pub cap_width: f64,
    pub seed: u64,
    /// Seed of the shared axes (the "encoder").
    pub axis_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 200,
            gallery_per_class: 10,
            probe_per_class: 10,
            dim: 64,
            quality_law: QualityLaw::TwoRegime {
                clean_fraction: 0.5,
                clean_noise: 0.4,
                degraded_noise: 1.6,
            },
            nuisance_dim: 8,
            nuisance_share: 0.9,
            confusion: 0.7,
            template_size: TemplateSize { min: 3, max: 6 },
            saturation_mode: false,
            cap_width: 0.15,
            seed: 7,
            axis_seed: 2024,
        }
    }
}

impl SynthConfig {
    /// Raw cosines concentrated near one; the regime sigmoid calibration
    /// is meant for.
    pub fn saturation_preset() -> Self {
        SynthConfig {
            quality_law: QualityLaw::TwoRegime {
                clean_fraction: 0.5,
                clean_noise: 0.05,
                degraded_noise: 0.15,
            },
            saturation_mode: true,
            cap_width: 0.3,
            ..SynthConfig::default()
        }
    }

    pub fn samples_per_class(&self) -> usize {
        self.gallery_per_class + self.probe_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("dim must be >= 2".into()));
        }
        if self.gallery_per_class == 0 || self.probe_per_class == 0 {
            return Err(Error::Config(
                "gallery and probe counts must be positive".into(),
            ));
        }
        if self.template_size.min == 0 || self.template_size.min > self.template_size.max {
            return Err(Error::Config("template_size needs 1 <= min <= max".into()));
        }
        if !(0.0..=1.0).contains(&self.nuisance_share) {
            return Err(Error::Config("nuisance_share must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.confusion) {
            return Err(Error::Config("confusion must lie in [0, 1]".into()));
        }
        // class directions live in the complement, which must not be empty
        if self.nuisance_dim == 0 || self.nuisance_dim >= self.dim {
            return Err(Error::Config("nuisance_dim needs 1 <= m < dim".into()));
        }
        if !(self.cap_width > 0.0 && self.cap_width.is_finite()) {
            return Err(Error::Config("cap_width must be positive".into()));
        }
        self.quality_law.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub records: Vec<EmbeddingRecord>,
    pub true_quality: BTreeMap<SampleId, f64>,
    pub true_class_directions: BTreeMap<SubjectId, Vec<f64>>,
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, dim);
        if norm(&v) > 0.0 {
            normalize(&mut v);
            return v;
        }
    }
}

struct ClassDraw {
    direction: Vec<f64>,
    samples: Vec<(Role, f64, Vec<f64>)>,
    template_sizes: [Vec<usize>; 2],
}

/// Removes the components of `v` along the orthonormal `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = crate::linalg::dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
    }
}

/// `count` orthonormal vectors (modified Gram-Schmidt on Gaussian draws).
fn orthonormal_basis(rng: &mut impl Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        project_out(&mut v, &basis);
        if norm(&v) > 1e-6 {
            normalize(&mut v);
            basis.push(v);
        }
    }
    basis
}

fn class_rng(cfg: &SynthConfig, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ splitmix64(k as u64)))
}

fn draw_direction(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    cap_axis: &[f64],
    nuisance: &[Vec<f64>],
) -> Vec<f64> {
    let d = cfg.dim;
    if cfg.saturation_mode {
        let g = gaussian(rng, d);
        let scale = cfg.cap_width / (d as f64).sqrt();
        let mut v: Vec<f64> = cap_axis
            .iter()
            .zip(&g)
            .map(|(a, x)| a + scale * x)
            .collect();
        if cfg.nuisance_share > 0.0 {
            project_out(&mut v, nuisance);
        }
        normalize(&mut v);
        v
    } else {
        loop {
            let mut v = gaussian(rng, d);
            if cfg.nuisance_share > 0.0 {
                project_out(&mut v, nuisance);
            }
            if norm(&v) > 0.0 {
                normalize(&mut v);
                break v;
            }
        }
    }
}

fn draw_samples(
    cfg: &SynthConfig,
    k: usize,
    mut rng: ChaCha8Rng,
    directions: &[Vec<f64>],
    nuisance: &[Vec<f64>],
) -> ClassDraw {
    let d = cfg.dim;
    let direction = directions[k].clone();
    let neighbor = nearest_other(directions, k);
    let iso = (1.0 - cfg.nuisance_share).sqrt() / (d as f64).sqrt();
    let sub = cfg.nuisance_share.sqrt() / (nuisance.len() as f64).sqrt();
    let roles = std::iter::repeat_n(Role::Gallery, cfg.gallery_per_class)
        .chain(std::iter::repeat_n(Role::Probe, cfg.probe_per_class));
    let samples = roles
        .map(|role| {
            let q = cfg.quality_law.draw_quality(&mut rng);
            let sigma = cfg.quality_law.noise_scale(q);
            let pull = cfg.confusion * (1.0 - q);
            let g = gaussian(&mut rng, d);
            let h = gaussian(&mut rng, nuisance.len());
            let mut z: Vec<f64> = (0..d).map(|i| direction[i] + sigma * iso * g[i]).collect();
            if pull > 0.0 {
                z.iter_mut()
                    .zip(&directions[neighbor])
                    .zip(&direction)
                    .for_each(|((x, b), a)| *x += pull * (b - a));
            }
            for (b, hj) in nuisance.iter().zip(&h) {
                z.iter_mut()
                    .zip(b)
                    .for_each(|(x, y)| *x += sigma * sub * hj * y);
            }
            // A zero vector needs an exact cancellation; fall back to the
            // class direction rather than fail.
            if norm(&z) > 0.0 {
                normalize(&mut z);
            } else {
                z.clone_from(&direction);
            }
            (role, q, z)
        })
        .collect();
    let sizes = |n: usize, rng: &mut ChaCha8Rng| {
        let mut out = Vec::new();
        let mut left = n;
        while left > 0 {
            let s = rng
                .random_range(cfg.template_size.min..=cfg.template_size.max)
                .min(left);
            out.push(s);
            left -= s;
        }
        out
    };
    let template_sizes = [
        sizes(cfg.gallery_per_class, &mut rng),
        sizes(cfg.probe_per_class, &mut rng),
    ];
    ClassDraw {
        direction,
        samples,
        template_sizes,
    }
}

/// Index of the direction most similar to `directions[k]`, smallest index
/// on ties.
fn nearest_other(directions: &[Vec<f64>], k: usize) -> usize {
    let mut best = (f64::NEG_INFINITY, k);
    for (j, v) in directions.iter().enumerate() {
        let c = crate::linalg::dot(v, &directions[k]);
        if j != k && c > best.0 {
            best = (c, j);
        }
    }
    best.1
}

/// Sample ids run `0..K*n` subject by subject (gallery before probe);
/// template ids are assigned in the same order.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut axis_rng = ChaCha8Rng::seed_from_u64(cfg.axis_seed);
    let cap_axis = unit_gaussian(&mut axis_rng, cfg.dim);
    let nuisance = orthonormal_basis(&mut axis_rng, cfg.dim, cfg.nuisance_dim);

    let (directions, rngs): (Vec<_>, Vec<_>) = (0..cfg.num_classes)
        .into_par_iter()
        .map(|k| {
            let mut rng = class_rng(cfg, k);
            (draw_direction(cfg, &mut rng, &cap_axis, &nuisance), rng)
        })
        .unzip();
    let classes: Vec<ClassDraw> = rngs
        .into_par_iter()
        .enumerate()
        .map(|(k, rng)| draw_samples(cfg, k, rng, &directions, &nuisance))
        .collect();

    let n = cfg.samples_per_class();
    let mut records = Vec::with_capacity(cfg.num_classes * n);
    let mut true_quality = BTreeMap::new();
    let mut true_class_directions = BTreeMap::new();
    let mut next_template = 0u64;
    for (k, class) in classes.into_iter().enumerate() {
        let subject = SubjectId(k as u64);
        let mut templates = Vec::with_capacity(n);
        for sizes in &class.template_sizes {
            for &s in sizes {
                templates.extend(std::iter::repeat_n(TemplateId(next_template), s));
                next_template += 1;
            }
        }
        for (i, ((role, q, z), template)) in class.samples.into_iter().zip(templates).enumerate() {
            let sample = SampleId((k * n + i) as u64);
            true_quality.insert(sample, q);
            records.push(EmbeddingRecord {
                subject,
                sample,
                template,
                role,
                vector: z,
            });
        }
        true_class_directions.insert(subject, class.direction);
    }
    Ok(SynthDataset {
        records,
        true_quality,
        true_class_directions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationStats {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and population variance of all CCS and NNCCS values pooled.
pub fn saturation_stats(labels: &RecognizabilityLabels) -> Result<SaturationStats> {
    let pool: Vec<f64> = labels
        .rows()
        .iter()
        .flat_map(|r| [r.ccs, r.nnccs])
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let (mean, variance) = mean_var(&pool);
    Ok(SaturationStats { mean, variance })
}
