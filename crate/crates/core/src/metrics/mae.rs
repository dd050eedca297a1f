use serde::{Deserialize, Serialize};

/// Remaining-time errors split by whether the true occurrence is inside the
/// horizon. An empty side contributes 0 to `wmae` and is flagged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaeFamily {
    pub wmae: f64,
    pub in_mae: f64,
    pub out_mae: f64,
    pub in_count: usize,
    pub out_count: usize,
}

impl MaeFamily {
    pub fn in_empty(&self) -> bool {
        self.in_count == 0
    }

    pub fn out_empty(&self) -> bool {
        self.out_count == 0
    }
}

/// Both inputs are clamped to `[0, horizon]` first, so a model trained for
/// a longer horizon can be scored at a shorter one.
pub fn mae_family(pred: &[f64], gt: &[f64], horizon: f64) -> MaeFamily {
    assert_eq!(pred.len(), gt.len(), "remaining-time lengths differ");
    let (mut in_sum, mut out_sum) = (0.0, 0.0);
    let (mut in_count, mut out_count) = (0, 0);
    for (&p, &g) in pred.iter().zip(gt) {
        let p = p.clamp(0.0, horizon);
        let g = g.clamp(0.0, horizon);
        if g < horizon {
            in_sum += (p - g).abs();
            in_count += 1;
        } else {
            out_sum += (p - g).abs();
            out_count += 1;
        }
    }
    let in_mae = if in_count > 0 { in_sum / in_count as f64 } else { 0.0 };
    let out_mae = if out_count > 0 { out_sum / out_count as f64 } else { 0.0 };
    MaeFamily {
        wmae: wmae(in_mae, out_mae),
        in_mae,
        out_mae,
        in_count,
        out_count,
    }
}

/// Unweighted mean of the inside and outside errors.
pub fn wmae(in_mae: f64, out_mae: f64) -> f64 {
    (in_mae + out_mae) / 2.0
}

/// Inside-horizon MAE per class. `pred` and `gt` hold one row of per-class
/// times per sample. Classes with no inside sample yield `None`.
pub fn per_class_in_mae(pred: &[Vec<f64>], gt: &[Vec<f64>], horizon: f64) -> Vec<Option<f64>> {
    assert_eq!(pred.len(), gt.len());
    let classes = gt.first().map_or(0, Vec::len);
    (0..classes)
        .map(|c| {
            let (p, g): (Vec<f64>, Vec<f64>) = pred.iter().zip(gt).map(|(p, g)| (p[c], g[c])).unzip();
            let m = mae_family(&p, &g, horizon);
            (!m.in_empty()).then_some(m.in_mae)
        })
        .collect()
}
