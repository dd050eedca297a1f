use serde::{Deserialize, Serialize};

use crate::data::SECONDS_PER_MINUTE;

/// `(len - t) / 60` for every second `t` of a video.
pub fn ground_truth_rsd(len: usize) -> Vec<f64> {
    (0..len).map(|t| (len - t) as f64 / SECONDS_PER_MINUTE as f64).collect()
}

/// Expand sparse `(second, minutes)` predictions into a per-second series:
/// each prediction is held and counted down one minute per 60 s until the
/// next one, never dropping below zero. Seconds before the first point take
/// the first value.
pub fn hold_series(points: &[(usize, f64)], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut k = 0;
    for s in 0..len {
        while k + 1 < points.len() && points[k + 1].0 <= s {
            k += 1;
        }
        match points.get(k) {
            None => out.push(0.0),
            Some(&(t, v)) => {
                let elapsed = s.saturating_sub(t) as f64 / SECONDS_PER_MINUTE as f64;
                out.push((v - elapsed).max(0.0));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RsdErrors {
    pub mae5: f64,
    pub mae30: f64,
    pub mae_all: f64,
    /// Video shorter than 30 minutes; `mae30` covers what exists.
    pub short: bool,
}

fn suffix_mean(errors: &[f64], seconds: usize) -> f64 {
    let tail = &errors[errors.len().saturating_sub(seconds)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

fn from_errors(errors: &[f64]) -> RsdErrors {
    RsdErrors {
        mae5: suffix_mean(errors, 5 * SECONDS_PER_MINUTE),
        mae30: suffix_mean(errors, 30 * SECONDS_PER_MINUTE),
        mae_all: suffix_mean(errors, errors.len()),
        short: errors.len() < 30 * SECONDS_PER_MINUTE,
    }
}

/// Errors over the last 5 minutes, last 30 minutes and the whole video.
pub fn rsd_mae(pred: &[f64], gt: &[f64]) -> RsdErrors {
    assert_eq!(pred.len(), gt.len(), "rsd series lengths differ");
    let errors: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).collect();
    from_errors(&errors)
}

/// Same as `rsd_mae(&hold_series(points, len), &ground_truth_rsd(len))`, but
/// while a held prediction is still counting down its error is taken at the
/// evaluation point, where both sides are exact. The two agree up to
/// rounding; this form keeps a perfect predictor at exactly zero.
pub fn rsd_mae_from_points(points: &[(usize, f64)], len: usize) -> RsdErrors {
    let minute = SECONDS_PER_MINUTE as f64;
    let mut errors = Vec::with_capacity(len);
    let mut k = 0;
    for s in 0..len {
        while k + 1 < points.len() && points[k + 1].0 <= s {
            k += 1;
        }
        let gt = (len - s) as f64 / minute;
        let e = match points.get(k) {
            None => gt,
            Some(&(t, v)) => {
                let held = v - s.saturating_sub(t) as f64 / minute;
                if held > 0.0 {
                    (v - (len as f64 - t.min(s) as f64) / minute).abs()
                } else {
                    gt
                }
            }
        };
        errors.push(e);
    }
    from_errors(&errors)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RsdSummary {
    pub mae5: MeanStd,
    pub mae30: MeanStd,
    pub mae_all: MeanStd,
    pub short_videos: usize,
}

pub fn summarize_rsd(per_video: &[RsdErrors]) -> RsdSummary {
    let pick = |f: fn(&RsdErrors) -> f64| MeanStd::of(&per_video.iter().map(f).collect::<Vec<_>>());
    RsdSummary {
        mae5: pick(|e| e.mae5),
        mae30: pick(|e| e.mae30),
        mae_all: pick(|e| e.mae_all),
        short_videos: per_video.iter().filter(|e| e.short).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let gt = ground_truth_rsd(4000);
        let e = rsd_mae(&gt, &gt);
        assert_eq!((e.mae5, e.mae30, e.mae_all), (0.0, 0.0, 0.0));
        assert!(!e.short);
    }

    #[test]
    fn constant_mean_on_ramp() {
        let len = 3600;
        let gt = ground_truth_rsd(len);
        let mean = gt.iter().sum::<f64>() / len as f64;
        let pred = vec![mean; len];
        let e = rsd_mae(&pred, &gt);
        let direct: f64 = (0..len).map(|t| (mean - (len - t) as f64 / 60.0).abs()).sum::<f64>() / len as f64;
        assert!((e.mae_all - direct).abs() < 1e-12);
        // Two triangles of legs T/2 over a ramp of height T give T/4.
        let total = len as f64 / 60.0;
        assert!((e.mae_all - total / 4.0).abs() < 1.0 / 60.0);
    }

    #[test]
    fn short_video_uses_available_suffix() {
        let gt = ground_truth_rsd(600);
        let pred = vec![0.0; 600];
        let e = rsd_mae(&pred, &gt);
        assert!(e.short);
        assert_eq!(e.mae30, e.mae_all);
    }

    #[test]
    fn hold_counts_down() {
        let s = hold_series(&[(0, 2.0), (120, 10.0)], 180);
        assert_eq!(s[0], 2.0);
        assert!((s[60] - 1.0).abs() < 1e-12);
        assert_eq!(s[120], 10.0);
        assert!((s[179] - (10.0 - 59.0 / 60.0)).abs() < 1e-12);
        let s = hold_series(&[(0, 0.5)], 120);
        assert_eq!(s[119], 0.0);
        // An exact hold of the truth reproduces it.
        let gt = ground_truth_rsd(300);
        let pts: Vec<(usize, f64)> = (0..300).step_by(60).map(|t| (t, gt[t])).collect();
        let held = hold_series(&pts, 300);
        assert!(held.iter().zip(&gt).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn point_form_matches_series_form() {
        let len = 2500;
        let pts: Vec<(usize, f64)> = (0..len).step_by(60).map(|t| (t, 3.0 + (t % 7) as f64 * 0.9)).collect();
        let a = rsd_mae_from_points(&pts, len);
        let b = rsd_mae(&hold_series(&pts, len), &ground_truth_rsd(len));
        assert!((a.mae_all - b.mae_all).abs() < 1e-12);
        assert!((a.mae5 - b.mae5).abs() < 1e-12);
        assert!((a.mae30 - b.mae30).abs() < 1e-12);
        let exact: Vec<(usize, f64)> = (0..len).step_by(60).map(|t| (t, (len - t) as f64 / 60.0)).collect();
        let e = rsd_mae_from_points(&exact, len);
        assert_eq!((e.mae5, e.mae30, e.mae_all), (0.0, 0.0, 0.0));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize_rsd(&[
            RsdErrors { mae5: 1.0, mae30: 2.0, mae_all: 3.0, short: true },
            RsdErrors { mae5: 3.0, mae30: 2.0, mae_all: 5.0, short: false },
        ]);
        assert_eq!(s.mae5, MeanStd { mean: 2.0, std: 1.0 });
        assert_eq!(s.mae30.std, 0.0);
        assert_eq!(s.short_videos, 1);
    }
}
