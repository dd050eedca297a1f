//! Semi-Markov workflow simulator.
//!
//! Phases are visited in grammar order; each may be skipped, lasts a uniformly
//! drawn number of seconds, and may be followed by one return visit to the
//! previous phase. Features are class prototypes plus Gaussian noise, so
//! recognition is learnable but not free.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSequence, LabeledSequence, PhaseLabel, Video};
use crate::error::{Result, SwagError};
use crate::rng::{derive_seed, rng_from};

pub const MIN_PHASE_SECONDS: usize = 30;
pub const MAX_PHASE_SECONDS: usize = 1800;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub min_seconds: usize,
    pub max_seconds: usize,
    pub skip_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowGrammar {
    pub phases: Vec<PhaseSpec>,
    /// Chance of going back to the previous phase once after finishing a phase.
    pub revisit_prob: f64,
}

impl WorkflowGrammar {
    /// Predictable ordering, no skips or revisits. Mean length about 37 min.
    pub fn structured() -> Self {
        let ranges = [
            (120, 300),
            (300, 600),
            (240, 480),
            (360, 720),
            (120, 300),
            (180, 420),
            (60, 240),
        ];
        Self {
            phases: ranges
                .iter()
                .map(|&(min_seconds, max_seconds)| PhaseSpec {
                    min_seconds,
                    max_seconds,
                    skip_prob: 0.0,
                })
                .collect(),
            revisit_prob: 0.0,
        }
    }

    /// Wider durations, optional late phases and occasional returns to the
    /// previous phase.
    pub fn variable() -> Self {
        let spec = [
            (120, 420, 0.0),
            (240, 900, 0.0),
            (180, 720, 0.2),
            (300, 1200, 0.0),
            (120, 600, 0.4),
            (120, 600, 0.4),
            (60, 420, 0.2),
        ];
        Self {
            phases: spec
                .iter()
                .map(|&(min_seconds, max_seconds, skip_prob)| PhaseSpec {
                    min_seconds,
                    max_seconds,
                    skip_prob,
                })
                .collect(),
            revisit_prob: 0.15,
        }
    }

    /// Every phase lasts exactly `seconds`; nothing is skipped or revisited.
    pub fn fixed(num_phases: usize, seconds: usize) -> Self {
        Self {
            phases: vec![
                PhaseSpec {
                    min_seconds: seconds,
                    max_seconds: seconds,
                    skip_prob: 0.0,
                };
                num_phases
            ],
            revisit_prob: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "structured" => Ok(Self::structured()),
            "variable" => Ok(Self::variable()),
            other => Err(SwagError::Config(format!(
                "unknown grammar `{other}` (expected structured|variable)"
            ))),
        }
    }

    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(SwagError::Config("grammar has no phases".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.min_seconds < MIN_PHASE_SECONDS
                || p.max_seconds > MAX_PHASE_SECONDS
                || p.min_seconds > p.max_seconds
            {
                return Err(SwagError::Config(format!(
                    "phase {i}: duration range ({}, {}) outside [{MIN_PHASE_SECONDS}, {MAX_PHASE_SECONDS}]",
                    p.min_seconds, p.max_seconds
                )));
            }
            if !(0.0..=1.0).contains(&p.skip_prob) {
                return Err(SwagError::Config(format!("phase {i}: skip probability out of range")));
            }
        }
        if !(0.0..=1.0).contains(&self.revisit_prob) {
            return Err(SwagError::Config("revisit probability out of range".into()));
        }
        Ok(())
    }
}

/// Draw one procedure. The first phase is kept if every phase was skipped.
pub fn generate_workflow(grammar: &WorkflowGrammar, video_id: &str, seed: u64) -> LabeledSequence {
    let mut rng = rng_from(seed);
    let mut labels = Vec::new();
    let mut previous: Option<usize> = None;
    let push = |labels: &mut Vec<PhaseLabel>, phase: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let spec = &grammar.phases[phase];
        let duration = rng.random_range(spec.min_seconds..=spec.max_seconds);
        labels.extend(std::iter::repeat_n(PhaseLabel(phase), duration));
    };
    for (phase, spec) in grammar.phases.iter().enumerate() {
        if rng.random::<f64>() < spec.skip_prob {
            continue;
        }
        push(&mut labels, phase, &mut rng);
        if let Some(prev) = previous {
            if rng.random::<f64>() < grammar.revisit_prob {
                push(&mut labels, prev, &mut rng);
            }
        }
        previous = Some(phase);
    }
    if labels.is_empty() {
        push(&mut labels, 0, &mut rng);
    }
    LabeledSequence::new(video_id, grammar.num_phases(), labels)
        .expect("generated labels are within the grammar")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    /// `num_phases` rows of `dim` values.
    pub prototypes: Vec<Vec<f64>>,
    pub noise_sigma: f64,
}

impl FeatureModel {
    /// Gaussian prototypes with unit per-coordinate scale.
    pub fn random(num_phases: usize, dim: usize, noise_sigma: f64, seed: u64) -> Self {
        let mut rng = rng_from(derive_seed(seed, 0xFEA7, 0));
        let normal = Normal::new(0.0, 1.0).unwrap();
        let prototypes = (0..num_phases)
            .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        Self {
            prototypes,
            noise_sigma,
        }
    }

    pub fn dim(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0) {
            return Err(SwagError::Config("noise sigma must be positive".into()));
        }
        let dim = self.dim();
        if dim == 0 || self.prototypes.iter().any(|p| p.len() != dim) {
            return Err(SwagError::Config("prototype rows must share a positive dimension".into()));
        }
        for i in 0..self.prototypes.len() {
            for j in i + 1..self.prototypes.len() {
                if self.prototypes[i] == self.prototypes[j] {
                    return Err(SwagError::Config(format!("prototypes {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    /// Index of the prototype closest to `x` in Euclidean distance.
    pub fn nearest_prototype(&self, x: &[f32]) -> usize {
        nearest_row(&self.prototypes, x)
    }
}

pub(crate) fn nearest_row(rows: &[Vec<f64>], x: &[f32]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, p) in rows.iter().enumerate() {
        let d: f64 = p
            .iter()
            .zip(x)
            .map(|(a, &b)| (a - b as f64).powi(2))
            .sum();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

pub fn generate_features(labels: &LabeledSequence, model: &FeatureModel, seed: u64) -> FeatureSequence {
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, model.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let dim = model.dim();
    let mut data = Vec::with_capacity(labels.len() * dim);
    for label in labels.labels() {
        for &p in &model.prototypes[label.0] {
            data.push((p + noise.sample(&mut rng)) as f32);
        }
    }
    FeatureSequence::new(dim, data).expect("finite prototypes give finite features")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }
}

/// Draw a full dataset. Video `k` (counting across splits in train, val, test
/// order) is named `vid{k:03}` and seeded from `(seed, k)` only.
pub fn build_dataset(
    grammar: &WorkflowGrammar,
    features: &FeatureModel,
    counts: SplitCounts,
    seed: u64,
) -> Result<Dataset> {
    grammar.validate()?;
    features.validate()?;
    if features.prototypes.len() != grammar.num_phases() {
        return Err(SwagError::Config(format!(
            "{} prototypes for {} phases",
            features.prototypes.len(),
            grammar.num_phases()
        )));
    }
    if counts.train == 0 || counts.val == 0 || counts.test == 0 {
        return Err(SwagError::Config("split counts must be positive".into()));
    }
    let make = |k: usize| {
        let id = format!("vid{k:03}");
        let labels = generate_workflow(grammar, &id, derive_seed(seed, 1, k as u64));
        let feats = generate_features(&labels, features, derive_seed(seed, 2, k as u64));
        Video::new(labels, feats).expect("features match labels")
    };
    let train: Vec<Video> = (0..counts.train).map(make).collect();
    let val: Vec<Video> = (counts.train..counts.train + counts.val).map(make).collect();
    let start = counts.train + counts.val;
    let test: Vec<Video> = (start..start + counts.test).map(make).collect();
    Dataset::new(grammar.num_phases(), train, val, test)
}
