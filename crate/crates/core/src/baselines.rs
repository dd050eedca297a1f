//! Naive anticipation baselines and the recognition sources they consume.

use crate::data::{HorizonGrid, PhaseLabel, Video};
use crate::error::{Result, SwagError};
use crate::metrics::{Anticipator, Prediction};
use crate::model::ModelAnticipator;
use crate::priors::TransitionPriorTensor;
use crate::rng::derive_seed;
use crate::simulate::nearest_row;

/// Repeat the current class over the whole horizon.
pub fn naive1(current: usize, grid: &HorizonGrid) -> Vec<usize> {
    vec![current; grid.minutes()]
}

/// Independent draws from the prior row of every future minute.
pub fn naive2(priors: &TransitionPriorTensor, current: usize, grid: &HorizonGrid, seed: u64) -> Result<Vec<usize>> {
    Ok(priors
        .sample_future(PhaseLabel(current), grid, seed)?
        .into_iter()
        .map(|l| l.0)
        .collect())
}

/// Most likely class of every future minute. Deterministic; not one of the
/// reference baselines.
pub fn naive2_argmax(priors: &TransitionPriorTensor, current: usize, grid: &HorizonGrid) -> Result<Vec<usize>> {
    Ok(priors
        .argmax_future(PhaseLabel(current), grid)?
        .into_iter()
        .map(|l| l.0)
        .collect())
}

/// Per-phase mean feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestCentroid {
    centroids: Vec<Vec<f64>>,
}

impl NearestCentroid {
    pub fn fit(videos: &[Video], num_phases: usize) -> Result<Self> {
        let dim = videos
            .first()
            .map(|v| v.features.dim())
            .ok_or_else(|| SwagError::Domain("cannot fit centroids without videos".into()))?;
        let mut sums = vec![vec![0.0; dim]; num_phases];
        let mut counts = vec![0usize; num_phases];
        for v in videos {
            for (t, l) in v.labels.labels().iter().enumerate() {
                counts[l.0] += 1;
                for (s, &x) in sums[l.0].iter_mut().zip(v.features.row(t)) {
                    *s += x as f64;
                }
            }
        }
        let centroids = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| {
                if n == 0 {
                    // Never selected: an unseen phase cannot be recognized.
                    vec![f64::INFINITY; dim]
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();
        Ok(Self { centroids })
    }

    pub fn classify(&self, x: &[f32]) -> usize {
        nearest_row(&self.centroids, x)
    }
}

/// Where a baseline gets its current class from.
#[derive(Clone, Debug)]
pub enum RecognitionSource {
    GroundTruth,
    NearestCentroid(NearestCentroid),
    Model(Box<ModelAnticipator>),
}

impl RecognitionSource {
    pub fn recognize(&self, video: &Video, t: usize) -> Result<usize> {
        match self {
            Self::GroundTruth => Ok(video.labels.at(t).0),
            Self::NearestCentroid(c) => Ok(c.classify(video.features.row(t))),
            Self::Model(m) => m.recognize(video, t),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GroundTruth => "gt",
            Self::NearestCentroid(_) => "centroid",
            Self::Model(_) => "model",
        }
    }
}

#[derive(Clone, Debug)]
pub enum NaiveKind {
    Naive1,
    Naive2 { priors: TransitionPriorTensor, seed: u64 },
    Naive2Argmax { priors: TransitionPriorTensor },
}

#[derive(Clone, Debug)]
pub struct NaiveAnticipator {
    pub kind: NaiveKind,
    pub recognition: RecognitionSource,
    pub horizon: usize,
}

/// Stable 64-bit FNV-1a hash, used to give each video its own sample stream.
fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Anticipator for NaiveAnticipator {
    fn name(&self) -> String {
        match self.kind {
            NaiveKind::Naive1 => "naive1".into(),
            NaiveKind::Naive2 { .. } => "naive2".into(),
            NaiveKind::Naive2Argmax { .. } => "naive2_argmax".into(),
        }
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, video: &Video, t: usize) -> Result<Prediction> {
        let grid = HorizonGrid::new(self.horizon);
        let current = self.recognition.recognize(video, t)?;
        let future = match &self.kind {
            NaiveKind::Naive1 => naive1(current, &grid),
            NaiveKind::Naive2 { priors, seed } => {
                let s = derive_seed(*seed, stable_hash(video.id()), t as u64);
                naive2(priors, current, &grid, s)?
            }
            NaiveKind::Naive2Argmax { priors } => naive2_argmax(priors, current, &grid)?,
        };
        Ok(Prediction {
            current,
            future,
            remaining: None,
            rsd: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledSequence;
    use crate::metrics::{extract_segments, horizon_accuracy, weighted_f1};
    use crate::priors::extract_transition_priors;
    use crate::simulate::{generate_workflow, WorkflowGrammar};

    #[test]
    fn naive1_examples() {
        assert_eq!(naive1(3, &HorizonGrid::new(5)), vec![3; 5]);
        assert_eq!(extract_segments(&naive1(2, &HorizonGrid::new(9))).len(), 1);
        let s = LabeledSequence::from_indices("v", 2, &[vec![0; 120], vec![1; 200]].concat()).unwrap();
        let grid = HorizonGrid::new(2);
        let pred = naive1(s.at(30).0, &grid);
        let gt: Vec<usize> = s.ground_truth_future(30, &grid).iter().map(|l| l.0).collect();
        assert_eq!(pred, vec![0, 0]);
        assert_eq!(gt, vec![0, 1]);
        assert_eq!(horizon_accuracy(&pred[..1], &gt[..1]), 1.0);
        assert_eq!(horizon_accuracy(&pred[1..], &gt[1..]), 0.0);
        assert_eq!(weighted_f1(&[4; 6], &[4; 6]), 1.0);
    }

    fn two_branch() -> Vec<LabeledSequence> {
        // Half the corpus goes 0 -> 1, half goes 0 -> 2, each phase 2 minutes.
        (0..10)
            .map(|k| LabeledSequence::from_indices("v", 3, &[vec![0; 120], vec![1 + k % 2; 120]].concat()).unwrap())
            .collect()
    }

    #[test]
    fn naive2_marginals_match_priors() {
        let grid = HorizonGrid::new(3);
        let p = extract_transition_priors(&two_branch(), &grid, 3, 1).unwrap();
        let draws = 10_000;
        let mut freq = vec![vec![0usize; 4]; 3];
        for k in 0..draws {
            for (n, c) in naive2(&p, 0, &grid, k).unwrap().into_iter().enumerate() {
                freq[n][c] += 1;
            }
        }
        for n in 0..3 {
            for j in 0..4 {
                let f = freq[n][j] as f64 / draws as f64;
                assert!((f - p.get(0, j, n + 1)).abs() < 0.02, "minute {n} class {j}: {f}");
                if p.get(0, j, n + 1) == 0.0 {
                    assert_eq!(freq[n][j], 0);
                }
            }
        }
    }

    #[test]
    fn one_hot_priors_make_naive2_deterministic() {
        let g = WorkflowGrammar::fixed(4, 120);
        let seqs = vec![generate_workflow(&g, "v", 0)];
        let grid = HorizonGrid::new(3);
        let p = extract_transition_priors(&seqs, &grid, 4, 120).unwrap();
        let a = naive2(&p, 1, &grid, 1).unwrap();
        assert_eq!(a, naive2(&p, 1, &grid, 99).unwrap());
        assert_eq!(a, naive2_argmax(&p, 1, &grid).unwrap());
        assert!(naive2(&p, 4, &grid, 1).is_err());
    }

    #[test]
    fn centroid_recognition_on_clean_features() {
        use crate::simulate::{build_dataset, FeatureModel, SplitCounts};
        let d = build_dataset(
            &WorkflowGrammar::structured(),
            &FeatureModel::random(7, 8, 0.05, 3),
            SplitCounts::new(4, 1, 2),
            1,
        )
        .unwrap();
        let c = NearestCentroid::fit(&d.train, 7).unwrap();
        for v in &d.test {
            let hits = (0..v.len()).filter(|&t| c.classify(v.features.row(t)) == v.labels.at(t).0).count();
            assert!(hits as f64 / v.len() as f64 > 0.99);
        }
    }
}
