use serde::{Deserialize, Serialize};

use super::frame::{horizon_accuracy, weighted_f1};
use super::mae::{mae_family, per_class_in_mae, MaeFamily};
use super::rsd::{rsd_mae_from_points, summarize_rsd, RsdErrors, RsdSummary};
use super::segments::{seg_f1_capped, MatchConfig};
use crate::data::{HorizonGrid, Video, SECONDS_PER_MINUTE};
use crate::error::{Result, SwagError};

/// What a method says about one time point.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Recognized phase at the current second.
    pub current: usize,
    /// Predicted labels for minutes `1..=N`.
    pub future: Vec<usize>,
    /// Minutes until each class (EOS last), when the method regresses them.
    pub remaining: Option<Vec<f64>>,
    /// Remaining surgery duration in minutes.
    pub rsd: Option<f64>,
}

/// Anything that can be evaluated on a video at a given second.
pub trait Anticipator: Sync {
    fn name(&self) -> String;

    fn horizon(&self) -> usize;

    fn predict(&self, video: &Video, t: usize) -> Result<Prediction>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub matching: MatchConfig,
    /// Seconds between evaluated time points.
    pub interval: usize,
    /// Pool every (sample, minute) pair for the mean F1 instead of averaging
    /// per-horizon scores.
    pub pooled_mean_f1: bool,
    pub jobs: usize,
}

impl EvalConfig {
    pub fn new(num_phases: usize) -> Self {
        Self {
            matching: MatchConfig::new(num_phases),
            interval: SECONDS_PER_MINUTE,
            pooled_mean_f1: false,
            jobs: 1,
        }
    }
}

/// One line of the report; horizon 0 is recognition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon: usize,
    pub samples: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub mae: Option<MaeFamily>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub videos: usize,
    pub samples: usize,
    pub recognition: HorizonRow,
    pub horizons: Vec<HorizonRow>,
    pub mean_f1: f64,
    pub mean_f1_pooled: bool,
    pub mean_accuracy: f64,
    pub seg_f1: f64,
    /// Inside-horizon MAE per class at the full horizon.
    pub per_class_in_mae: Option<Vec<Option<f64>>>,
    pub rsd: Option<RsdSummary>,
}

impl MetricsReport {
    /// Recognition row followed by one row per horizon.
    pub fn rows(&self) -> Vec<&HorizonRow> {
        std::iter::once(&self.recognition).chain(&self.horizons).collect()
    }
}

/// Everything collected on one video.
#[derive(Clone, Debug)]
pub struct VideoEvaluation {
    pub video_id: String,
    pub times: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub truth_current: Vec<usize>,
    pub truth_future: Vec<Vec<usize>>,
    pub truth_remaining: Vec<Vec<f64>>,
    pub rsd: Option<RsdErrors>,
}

pub fn evaluate_video(method: &dyn Anticipator, video: &Video, interval: usize) -> Result<VideoEvaluation> {
    let n = method.horizon();
    let grid = HorizonGrid::new(n);
    let labels = &video.labels;
    let times: Vec<usize> = (0..video.len()).step_by(interval.max(1)).collect();
    let mut out = VideoEvaluation {
        video_id: video.id().to_string(),
        times: times.clone(),
        predictions: Vec::with_capacity(times.len()),
        truth_current: Vec::with_capacity(times.len()),
        truth_future: Vec::with_capacity(times.len()),
        truth_remaining: Vec::with_capacity(times.len()),
        rsd: None,
    };
    for &t in &times {
        let p = method.predict(video, t)?;
        if p.future.len() != n {
            return Err(SwagError::Domain(format!(
                "{} predicted {} minutes, expected {n}",
                method.name(),
                p.future.len()
            )));
        }
        out.predictions.push(p);
        out.truth_current.push(labels.at(t).0);
        out.truth_future.push(labels.ground_truth_future(t, &grid).iter().map(|l| l.0).collect());
        out.truth_remaining.push(labels.ground_truth_remaining_times(t, &grid));
    }
    if out.predictions.iter().all(|p| p.rsd.is_some()) && !out.predictions.is_empty() {
        let points: Vec<(usize, f64)> = times
            .iter()
            .zip(&out.predictions)
            .map(|(&t, p)| (t, p.rsd.expect("checked")))
            .collect();
        out.rsd = Some(rsd_mae_from_points(&points, video.len()));
    }
    Ok(out)
}

/// Per-video evaluations in input order, fanned out over `jobs` threads.
pub fn evaluate_videos(method: &dyn Anticipator, videos: &[Video], cfg: &EvalConfig) -> Result<Vec<VideoEvaluation>> {
    let jobs = cfg.jobs.max(1).min(videos.len().max(1));
    if jobs == 1 {
        return videos.iter().map(|v| evaluate_video(method, v, cfg.interval)).collect();
    }
    let chunk = videos.len().div_ceil(jobs);
    let results: Vec<Result<Vec<VideoEvaluation>>> = std::thread::scope(|s| {
        let handles: Vec<_> = videos
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|v| evaluate_video(method, v, cfg.interval))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(videos.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Slide over every evaluation point of every video and aggregate.
pub fn evaluate_run(method: &dyn Anticipator, videos: &[Video], cfg: &EvalConfig) -> Result<MetricsReport> {
    let evals = evaluate_videos(method, videos, cfg)?;
    Ok(aggregate(&method.name(), method.horizon(), &evals, cfg))
}

pub fn aggregate(method: &str, horizon: usize, evals: &[VideoEvaluation], cfg: &EvalConfig) -> MetricsReport {
    let m = &cfg.matching;
    let samples: usize = evals.iter().map(|e| e.predictions.len()).sum();
    let all = || evals.iter().flat_map(|e| (0..e.predictions.len()).map(move |i| (e, i)));

    let (rp, rg): (Vec<usize>, Vec<usize>) = all().map(|(e, i)| (e.predictions[i].current, e.truth_current[i])).unzip();
    let recognition = HorizonRow {
        horizon: 0,
        samples,
        accuracy: horizon_accuracy(&rp, &rg),
        f1: weighted_f1(&rp, &rg),
        mae: None,
    };

    let has_remaining = samples > 0 && all().all(|(e, i)| e.predictions[i].remaining.is_some());
    let mut pooled_pred = Vec::new();
    let mut pooled_gt = Vec::new();
    let mut horizons = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (e, i) in all() {
            let gt = &e.truth_future[i];
            if n - 1 < m.capped_len(gt) {
                p.push(e.predictions[i].future[n - 1]);
                g.push(gt[n - 1]);
            }
        }
        let mae = has_remaining.then(|| {
            let (mp, mg): (Vec<f64>, Vec<f64>) = all()
                .flat_map(|(e, i)| {
                    let pr = e.predictions[i].remaining.as_ref().expect("checked");
                    pr.iter().copied().zip(e.truth_remaining[i].iter().copied())
                })
                .unzip();
            mae_family(&mp, &mg, n as f64)
        });
        horizons.push(HorizonRow {
            horizon: n,
            samples: g.len(),
            accuracy: horizon_accuracy(&p, &g),
            f1: weighted_f1(&p, &g),
            mae,
        });
        pooled_pred.extend(p);
        pooled_gt.extend(g);
    }
    let mean = |f: fn(&HorizonRow) -> f64| {
        if horizons.is_empty() {
            0.0
        } else {
            horizons.iter().map(f).sum::<f64>() / horizons.len() as f64
        }
    };
    let mean_f1 = if cfg.pooled_mean_f1 {
        weighted_f1(&pooled_pred, &pooled_gt)
    } else {
        mean(|r| r.f1)
    };
    let mean_accuracy = mean(|r| r.accuracy);
    let seg_f1 = if samples == 0 {
        0.0
    } else {
        all()
            .map(|(e, i)| seg_f1_capped(&e.predictions[i].future, &e.truth_future[i], m).expect("equal lengths"))
            .sum::<f64>()
            / samples as f64
    };
    let per_class = has_remaining.then(|| {
        let (p, g): (Vec<Vec<f64>>, Vec<Vec<f64>>) = all()
            .map(|(e, i)| (e.predictions[i].remaining.clone().expect("checked"), e.truth_remaining[i].clone()))
            .unzip();
        per_class_in_mae(&p, &g, horizon as f64)
    });
    let rsd = (!evals.is_empty() && evals.iter().all(|e| e.rsd.is_some()))
        .then(|| summarize_rsd(&evals.iter().map(|e| e.rsd.expect("checked")).collect::<Vec<_>>()));
    MetricsReport {
        method: method.to_string(),
        videos: evals.len(),
        samples,
        recognition,
        horizons,
        mean_f1,
        mean_f1_pooled: cfg.pooled_mean_f1,
        mean_accuracy,
        seg_f1,
        per_class_in_mae: per_class,
        rsd,
    }
}

/// Perfect knowledge of the future, for sanity checks.
#[derive(Clone, Debug)]
pub struct GroundTruthOracle {
    pub horizon: usize,
}

impl Anticipator for GroundTruthOracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, video: &Video, t: usize) -> Result<Prediction> {
        let grid = HorizonGrid::new(self.horizon);
        let labels = &video.labels;
        Ok(Prediction {
            current: labels.at(t).0,
            future: labels.ground_truth_future(t, &grid).iter().map(|l| l.0).collect(),
            remaining: Some(labels.ground_truth_remaining_times(t, &grid)),
            rsd: Some(labels.remaining_duration(t)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{build_dataset, FeatureModel, SplitCounts, WorkflowGrammar};

    #[test]
    fn oracle_is_perfect() {
        let d = build_dataset(
            &WorkflowGrammar::structured(),
            &FeatureModel::random(7, 2, 0.1, 1),
            SplitCounts::new(1, 1, 3),
            5,
        )
        .unwrap();
        let cfg = EvalConfig::new(7);
        let r = evaluate_run(&GroundTruthOracle { horizon: 6 }, &d.test, &cfg).unwrap();
        assert_eq!(r.rows().len(), 7);
        assert_eq!(r.recognition.f1, 1.0);
        assert_eq!(r.seg_f1, 1.0);
        for row in &r.horizons {
            assert_eq!(row.f1, 1.0);
            let mae = row.mae.unwrap();
            assert_eq!((mae.wmae, mae.in_mae, mae.out_mae), (0.0, 0.0, 0.0));
        }
        let rsd = r.rsd.unwrap();
        assert_eq!((rsd.mae5.mean, rsd.mae30.mean, rsd.mae_all.mean), (0.0, 0.0, 0.0));
        let parallel = evaluate_run(&GroundTruthOracle { horizon: 6 }, &d.test, &EvalConfig { jobs: 3, ..cfg }).unwrap();
        assert_eq!(parallel, r);
    }
}
