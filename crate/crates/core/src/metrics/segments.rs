use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::error::{Result, SwagError};

/// A maximal run of one class over inclusive minute indices `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize, class: usize) -> Self {
        assert!(start <= end, "segment start {start} after end {end}");
        Self { start, end, class }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn extract_segments(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.class == c => s.end = i,
            _ => out.push(Segment::new(i, i, c)),
        }
    }
    out
}

/// Inclusive-interval intersection over union.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) as isize - a.start.max(b.start) as isize + 1).max(0) as f64;
    let union = (a.len() + b.len()) as f64 - inter;
    inter / union
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub eos_weight: f64,
    pub eos_cap_minutes: usize,
    /// Class index treated as end-of-surgery.
    pub eos_class: usize,
}

impl MatchConfig {
    pub fn new(num_phases: usize) -> Self {
        Self {
            iou_threshold: 0.25,
            eos_weight: 0.5,
            eos_cap_minutes: 4,
            eos_class: num_phases,
        }
    }

    pub fn with_eos_cap(mut self, minutes: usize) -> Self {
        self.eos_cap_minutes = minutes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(SwagError::Config(format!("iou threshold {} outside (0,1]", self.iou_threshold)));
        }
        if !(self.eos_weight > 0.0 && self.eos_weight <= 1.0) {
            return Err(SwagError::Config(format!("eos weight {} outside (0,1]", self.eos_weight)));
        }
        if self.eos_cap_minutes == 0 {
            return Err(SwagError::Config("eos cap must be at least one minute".into()));
        }
        Ok(())
    }

    pub fn weight(&self, class: usize) -> f64 {
        if class == self.eos_class {
            self.eos_weight
        } else {
            1.0
        }
    }

    /// Number of leading positions kept once ground truth reaches EOS: up to
    /// the first EOS index plus the cap.
    pub fn capped_len(&self, gt: &[usize]) -> usize {
        gt.iter()
            .position(|&c| c == self.eos_class)
            .map_or(gt.len(), |first| (first + self.eos_cap_minutes).min(gt.len()))
    }

    /// Truncate both sequences at the same capped length.
    pub fn cap<'a>(&self, pred: &'a [usize], gt: &'a [usize]) -> (&'a [usize], &'a [usize]) {
        let n = self.capped_len(gt).min(pred.len());
        (&pred[..n], &gt[..n])
    }
}

/// Weighted segment counts behind one SegF1 value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegmentCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

impl SegmentCounts {
    pub fn f1(&self) -> f64 {
        let p = if self.tp + self.fp > 0.0 { self.tp / (self.tp + self.fp) } else { 0.0 };
        let r = if self.tp + self.fn_ > 0.0 { self.tp / (self.tp + self.fn_) } else { 0.0 };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Optimal class-consistent matching with IoU at least the threshold.
/// Returns `(pred_index, gt_index)` pairs.
pub fn match_segments(pred: &[Segment], gt: &[Segment], cfg: &MatchConfig) -> Vec<(usize, usize)> {
    let cost: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| {
            gt.iter()
                .map(|g| {
                    let o = iou(p, g);
                    if p.class == g.class && o >= cfg.iou_threshold {
                        // Total IoU first, weighted TP only breaks exact ties.
                        -o - 1e-9 * cfg.weight(p.class)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
}

pub fn segment_counts(pred: &[Segment], gt: &[Segment], cfg: &MatchConfig) -> SegmentCounts {
    let matched = match_segments(pred, gt, cfg);
    let tp: f64 = matched.iter().map(|&(i, _)| cfg.weight(pred[i].class)).sum();
    let pred_total: f64 = pred.iter().map(|s| cfg.weight(s.class)).sum();
    let gt_total: f64 = gt.iter().map(|s| cfg.weight(s.class)).sum();
    SegmentCounts {
        tp,
        fp: pred_total - tp,
        fn_: gt_total - tp,
    }
}

/// SegF1 on label sequences that are already EOS-capped.
pub fn seg_f1(pred: &[usize], gt: &[usize], cfg: &MatchConfig) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(SwagError::Shape {
            op: "seg_f1",
            left: (pred.len(), 1),
            right: (gt.len(), 1),
        });
    }
    Ok(segment_counts(&extract_segments(pred), &extract_segments(gt), cfg).f1())
}

/// Applies the EOS cap to both sequences and then scores them.
pub fn seg_f1_capped(pred: &[usize], gt: &[usize], cfg: &MatchConfig) -> Result<f64> {
    if pred.len() != gt.len() {
        return seg_f1(pred, gt, cfg);
    }
    let (p, g) = cfg.cap(pred, gt);
    seg_f1(p, g, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    #[test]
    fn segment_examples() {
        assert_eq!(
            extract_segments(&[1, 1, 2, 2, 2]),
            vec![Segment::new(0, 1, 1), Segment::new(2, 4, 2)]
        );
        assert_eq!(extract_segments(&[4; 9]).len(), 1);
        assert_eq!(extract_segments(&[1, 2, 1, 2]).len(), 4);
    }

    fn minutes(s: &Segment) -> BTreeSet<usize> {
        (s.start..=s.end).collect()
    }

    #[test]
    fn iou_examples() {
        let a = Segment::new(0, 3, 1);
        let b = Segment::new(2, 5, 1);
        assert_eq!(iou(&a, &b), 1.0 / 3.0);
        let (sa, sb) = (minutes(&a), minutes(&b));
        let oracle = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
        assert_eq!(iou(&a, &b), oracle);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &Segment::new(7, 9, 1)), 0.0);
    }

    #[test]
    fn identical_sequences_score_one() {
        let cfg = MatchConfig::new(7);
        assert_eq!(seg_f1(&[0, 0, 1, 2, 7, 7], &[0, 0, 1, 2, 7, 7], &cfg).unwrap(), 1.0);
        assert!(seg_f1(&[0, 1], &[0], &cfg).is_err());
    }

    #[test]
    fn partial_coverage_above_threshold_is_a_hit() {
        // A predicted segment covering 30% of a same-class ground-truth segment.
        let cfg = MatchConfig::new(7);
        let gt = [Segment::new(0, 9, 2)];
        let pred = [Segment::new(0, 2, 2)];
        assert!((iou(&pred[0], &gt[0]) - 0.3).abs() < 1e-15);
        let c = segment_counts(&pred, &gt, &cfg);
        assert_eq!(c, SegmentCounts { tp: 1.0, fp: 0.0, fn_: 0.0 });
        assert_eq!(c.f1(), 1.0);
    }

    #[test]
    fn eos_segments_count_half() {
        let cfg = MatchConfig::new(3);
        // gt: [0,0,3,3], pred: [0,0,1,1] -> TP 1, FP 1, FN 0.5
        let c = segment_counts(&extract_segments(&[0, 0, 1, 1]), &extract_segments(&[0, 0, 3, 3]), &cfg);
        assert_eq!(c, SegmentCounts { tp: 1.0, fp: 1.0, fn_: 0.5 });
        let (p, r) = (0.5, 1.0 / 1.5);
        assert!((c.f1() - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn cap_truncates_at_first_eos_plus_cap() {
        let cfg = MatchConfig::new(2).with_eos_cap(2);
        let gt = [0, 1, 2, 2, 2, 2];
        let pred = [0, 1, 1, 2, 2, 2];
        let (p, g) = cfg.cap(&pred, &gt);
        assert_eq!((p.len(), g.len()), (4, 4));
        assert_eq!(cfg.capped_len(&[0, 1]), 2);
    }

    fn weighted_tp(pred: &[Segment], gt: &[Segment], cfg: &MatchConfig) -> f64 {
        segment_counts(pred, gt, cfg).tp
    }

    /// Exhaustive search over partial matchings, maximizing total IoU and then
    /// weighted TP.
    fn brute(pred: &[Segment], gt: &[Segment], cfg: &MatchConfig, i: usize, used: &mut Vec<bool>) -> (f64, f64) {
        if i == pred.len() {
            return (0.0, 0.0);
        }
        let mut best = brute(pred, gt, cfg, i + 1, used);
        for j in 0..gt.len() {
            let o = iou(&pred[i], &gt[j]);
            if used[j] || pred[i].class != gt[j].class || o < cfg.iou_threshold {
                continue;
            }
            used[j] = true;
            let (s, w) = brute(pred, gt, cfg, i + 1, used);
            used[j] = false;
            let cand = (s + o, w + cfg.weight(pred[i].class));
            if cand.0 > best.0 + 1e-12 || ((cand.0 - best.0).abs() <= 1e-12 && cand.1 > best.1) {
                best = cand;
            }
        }
        best
    }

    fn random_segments(rng: &mut impl Rng, classes: usize) -> Vec<Segment> {
        let k = rng.random_range(1..=7);
        let mut out = Vec::new();
        let mut start = 0;
        for _ in 0..k {
            let len = rng.random_range(1..=5);
            out.push(Segment::new(start, start + len - 1, rng.random_range(0..=classes)));
            start += len;
        }
        out
    }

    #[test]
    fn hungarian_matches_exhaustive_weighted_tp() {
        let cfg = MatchConfig::new(3);
        let mut rng = rng_from(17);
        for _ in 0..200 {
            let pred = random_segments(&mut rng, 3);
            let gt = random_segments(&mut rng, 3);
            let (_, w) = brute(&pred, &gt, &cfg, 0, &mut vec![false; gt.len()]);
            assert_eq!(weighted_tp(&pred, &gt, &cfg), w);
        }
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a0 in 0usize..20, al in 0usize..10, b0 in 0usize..20, bl in 0usize..10) {
            let a = Segment::new(a0, a0 + al, 0);
            let b = Segment::new(b0, b0 + bl, 0);
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&iou(&a, &b)));
        }

        #[test]
        fn segments_reconstruct_input(labels in prop::collection::vec(0usize..4, 1..60)) {
            let segs = extract_segments(&labels);
            let mut rebuilt = Vec::new();
            for s in &segs {
                rebuilt.extend(std::iter::repeat(s.class).take(s.len()));
            }
            prop_assert_eq!(rebuilt, labels);
            for w in segs.windows(2) {
                prop_assert_ne!(w[0].class, w[1].class);
            }
        }

        #[test]
        fn seg_f1_invariant_under_relabeling(
            pred in prop::collection::vec(0usize..4, 12),
            gt in prop::collection::vec(0usize..4, 12),
        ) {
            // Permutation fixing the EOS index 3.
            let perm = [2usize, 0, 1, 3];
            let cfg = MatchConfig::new(3);
            let a = seg_f1(&pred, &gt, &cfg).unwrap();
            let p2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
            let g2: Vec<usize> = gt.iter().map(|&c| perm[c]).collect();
            prop_assert_eq!(a, seg_f1(&p2, &g2, &cfg).unwrap());
            prop_assert_eq!(seg_f1_capped(&pred, &pred, &cfg).unwrap(), 1.0);
        }
    }
}
