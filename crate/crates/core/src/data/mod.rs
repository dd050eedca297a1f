//! Label and feature containers, the minute horizon grid, and the ground-truth
//! targets derived from a labelled procedure.
//!
//! Time is measured in seconds everywhere inside the crate. Minutes only show
//! up on the horizon grid and in remaining-time vectors.

mod io;

pub use io::{
    load_dataset, load_features, load_labels, read_features, read_labels, save_dataset,
    save_features, save_labels, write_features, write_labels, Manifest, ManifestEntry,
    FEATURE_MAGIC,
};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SwagError};

/// Seconds per anticipation step.
pub const SECONDS_PER_MINUTE: usize = 60;

/// Default number of surgical phases; the end-of-surgery class takes index 7.
pub const DEFAULT_NUM_PHASES: usize = 7;

/// A class index. Values `0..num_phases` are surgical phases and
/// `num_phases` is the synthetic end-of-surgery (EOS) class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhaseLabel(pub usize);

impl PhaseLabel {
    pub fn eos(num_phases: usize) -> Self {
        PhaseLabel(num_phases)
    }

    pub fn is_eos(self, num_phases: usize) -> bool {
        self.0 == num_phases
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-second phase annotation of one recorded procedure. EOS never appears
/// inside a recording.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSequence {
    video_id: String,
    num_phases: usize,
    labels: Vec<PhaseLabel>,
}

impl LabeledSequence {
    pub fn new(
        video_id: impl Into<String>,
        num_phases: usize,
        labels: Vec<PhaseLabel>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if labels.is_empty() {
            return Err(SwagError::Domain(format!("sequence {video_id} is empty")));
        }
        if let Some((s, bad)) = labels.iter().enumerate().find(|(_, l)| l.0 >= num_phases) {
            return Err(SwagError::Domain(format!(
                "sequence {video_id}: phase {} at second {s} outside 0..{num_phases}",
                bad.0
            )));
        }
        Ok(Self {
            video_id,
            num_phases,
            labels,
        })
    }

    /// Convenience constructor from raw indices.
    pub fn from_indices(
        video_id: impl Into<String>,
        num_phases: usize,
        labels: &[usize],
    ) -> Result<Self> {
        Self::new(
            video_id,
            num_phases,
            labels.iter().copied().map(PhaseLabel).collect(),
        )
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    /// Number of output classes including EOS.
    pub fn num_classes(&self) -> usize {
        self.num_phases + 1
    }

    pub fn eos(&self) -> PhaseLabel {
        PhaseLabel::eos(self.num_phases)
    }

    pub fn labels(&self) -> &[PhaseLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn at(&self, second: usize) -> PhaseLabel {
        self.labels[second]
    }

    /// Label at `t + offset`, or EOS past the end of the recording.
    pub fn future_label(&self, t: usize, offset: usize) -> PhaseLabel {
        debug_assert!(t < self.len());
        self.labels
            .get(t + offset)
            .copied()
            .unwrap_or_else(|| self.eos())
    }

    /// Label at a possibly negative second; times before the start repeat the
    /// first label, matching the left-padding of feature windows.
    pub fn label_clamped(&self, second: isize) -> PhaseLabel {
        if second < 0 {
            self.labels[0]
        } else {
            self.labels
                .get(second as usize)
                .copied()
                .unwrap_or_else(|| self.eos())
        }
    }

    /// Phase labels at `t + 60 h_n` for `n = 1..=N`.
    pub fn ground_truth_future(&self, t: usize, grid: &HorizonGrid) -> Vec<PhaseLabel> {
        grid.offsets_seconds()
            .map(|offset| self.future_label(t, offset))
            .collect()
    }

    /// Minutes until the next occurrence of every class (EOS last), clamped to
    /// the horizon. The active phase gets 0.
    pub fn ground_truth_remaining_times(&self, t: usize, grid: &HorizonGrid) -> Vec<f64> {
        let horizon = grid.minutes() as f64;
        let limit = grid.minutes() * SECONDS_PER_MINUTE;
        let mut times = vec![horizon; self.num_classes()];
        let current = self.labels[t];
        times[current.0] = 0.0;
        let end = (t + limit + 1).min(self.len());
        for s in t + 1..end {
            let c = self.labels[s].0;
            if times[c] >= horizon {
                times[c] = ((s - t) as f64 / SECONDS_PER_MINUTE as f64).min(horizon);
            }
        }
        times[self.num_phases] =
            ((self.len() - t) as f64 / SECONDS_PER_MINUTE as f64).min(horizon);
        times
    }

    /// Unclamped remaining surgery duration in minutes at second `t`.
    pub fn remaining_duration(&self, t: usize) -> f64 {
        (self.len() as f64 - t as f64) / SECONDS_PER_MINUTE as f64
    }
}

/// Per-second feature vectors standing in for vision-encoder embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(SwagError::Domain("feature dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(SwagError::Domain(format!(
                "feature buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SwagError::Domain("non-finite feature value".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Anticipation steps `h_0 = 0, h_1 = 1, .., h_N = N` minutes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonGrid {
    minutes: usize,
}

impl HorizonGrid {
    pub fn new(minutes: usize) -> Self {
        Self { minutes }
    }

    /// N, the maximum anticipation horizon in minutes.
    pub fn minutes(&self) -> usize {
        self.minutes
    }

    /// `h_n` for `n = 0..=N`.
    pub fn steps(&self) -> impl Iterator<Item = usize> {
        0..=self.minutes
    }

    /// Offsets in seconds for `n = 1..=N`.
    pub fn offsets_seconds(&self) -> impl Iterator<Item = usize> {
        (1..=self.minutes).map(|n| n * SECONDS_PER_MINUTE)
    }

    pub fn truncate(&self, minutes: usize) -> Self {
        Self {
            minutes: minutes.min(self.minutes),
        }
    }
}

/// A labelled procedure with its features.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub labels: LabeledSequence,
    pub features: FeatureSequence,
}

impl Video {
    pub fn new(labels: LabeledSequence, features: FeatureSequence) -> Result<Self> {
        if labels.len() != features.len() {
            return Err(SwagError::Domain(format!(
                "video {}: {} labels but {} feature rows",
                labels.video_id(),
                labels.len(),
                features.len()
            )));
        }
        Ok(Self { labels, features })
    }

    pub fn id(&self) -> &str {
        self.labels.video_id()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub num_phases: usize,
    pub train: Vec<Video>,
    pub val: Vec<Video>,
    pub test: Vec<Video>,
}

impl Dataset {
    pub fn new(
        num_phases: usize,
        train: Vec<Video>,
        val: Vec<Video>,
        test: Vec<Video>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in train.iter().chain(&val).chain(&test) {
            if v.labels.num_phases() != num_phases {
                return Err(SwagError::Domain(format!(
                    "video {} uses {} phases, dataset uses {num_phases}",
                    v.id(),
                    v.labels.num_phases()
                )));
            }
            if !seen.insert(v.id().to_owned()) {
                return Err(SwagError::Domain(format!("duplicate video id {}", v.id())));
            }
        }
        Ok(Self {
            num_phases,
            train,
            val,
            test,
        })
    }

    pub fn split(&self, split: Split) -> &[Video] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .next()
            .map(|v| v.features.dim())
    }

    pub fn train_labels(&self) -> Vec<LabeledSequence> {
        self.train.iter().map(|v| v.labels.clone()).collect()
    }
}
