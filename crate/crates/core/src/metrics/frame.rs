use std::collections::BTreeMap;

/// Per-class `(f1, support)` for every class seen in either sequence.
pub fn per_class_f1(pred: &[usize], gt: &[usize]) -> BTreeMap<usize, (f64, usize)> {
    assert_eq!(pred.len(), gt.len(), "frame metrics need equal lengths");
    let mut counts: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            counts.entry(g).or_default()[0] += 1;
        } else {
            counts.entry(p).or_default()[1] += 1;
            counts.entry(g).or_default()[2] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, [tp, fp, fn_])| {
            let denom = 2 * tp + fp + fn_;
            let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
            (c, (f1, tp + fn_))
        })
        .collect()
}

/// Per-class F1 averaged with weights proportional to ground-truth support.
/// Returns 0 for empty input.
pub fn weighted_f1(pred: &[usize], gt: &[usize]) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    per_class_f1(pred, gt)
        .values()
        .map(|&(f1, support)| f1 * support as f64)
        .sum::<f64>()
        / gt.len() as f64
}

pub fn horizon_accuracy(pred: &[usize], gt: &[usize]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "frame metrics need equal lengths");
    if gt.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gt).filter(|(p, g)| p == g).count() as f64 / gt.len() as f64
}
