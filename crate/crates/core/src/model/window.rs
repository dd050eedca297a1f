use crate::data::{HorizonGrid, Video, SECONDS_PER_MINUTE};
use crate::numerics::Matrix;

use super::config::SwagConfig;
use super::network::Targets;

/// Features for seconds `t - L + 1 ..= t`; seconds before the start repeat
/// the first frame.
pub fn feature_window(video: &Video, t: usize, context: usize) -> Matrix {
    let f = &video.features;
    let dim = f.dim();
    let mut data = Vec::with_capacity(context * dim);
    for i in 0..context {
        let s = (t + i + 1).saturating_sub(context);
        data.extend(f.row(s).iter().map(|&v| v as f64));
    }
    Matrix::from_vec(context, dim, data).expect("window shape")
}

/// Supervision for a window ending at second `t`.
pub fn targets_at(video: &Video, t: usize, config: &SwagConfig) -> Targets {
    let labels = &video.labels;
    let (l, m) = (config.context_seconds as isize, config.context_tokens as isize);
    let t = t as isize;
    let grid = HorizonGrid::new(config.horizon);
    let minute = SECONDS_PER_MINUTE as isize;
    Targets {
        recognition: (0..m).map(|k| labels.label_clamped(t - m + 1 + k).0).collect(),
        current: labels.at(t as usize).0,
        future: labels.ground_truth_future(t as usize, &grid).iter().map(|p| p.0).collect(),
        remaining: labels.ground_truth_remaining_times(t as usize, &grid),
        // Token k pools up to second t - L + 60(k + 1); its target is one
        // minute later.
        context: (0..m).map(|k| labels.label_clamped(t - l + minute * (k + 2)).0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSequence, LabeledSequence};

    fn video() -> Video {
        let labels = LabeledSequence::from_indices("v", 3, &[vec![0; 120], vec![1; 120]].concat()).unwrap();
        let features = FeatureSequence::new(1, (0..240).map(|t| t as f32).collect()).unwrap();
        Video::new(labels, features).unwrap()
    }

    #[test]
    fn window_is_left_padded() {
        let w = feature_window(&video(), 2, 5);
        assert_eq!(w.data(), &[0.0, 0.0, 0.0, 1.0, 2.0]);
        let w = feature_window(&video(), 100, 3);
        assert_eq!(w.data(), &[98.0, 99.0, 100.0]);
    }

    #[test]
    fn context_targets_shift_one_minute() {
        let cfg = SwagConfig {
            context_seconds: 120,
            context_tokens: 2,
            horizon: 3,
            ..SwagConfig::toy()
        };
        let t = targets_at(&video(), 100, &cfg);
        // Tokens end at seconds 40 and 100; targets at 100 and 160.
        assert_eq!(t.context, vec![0, 1]);
        assert_eq!(t.future, vec![1, 1, 3]);
        assert_eq!(t.context[1], t.future[0]);
        assert_eq!(t.recognition, vec![0, 0]);
    }
}
