use super::Matrix;

/// Probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient with respect to the pre-softmax logits.
    pub grad: Matrix,
    /// Number of probabilities that hit [`PROB_FLOOR`].
    pub clamped: usize,
}

/// Class-weighted cross-entropy over rows of softmax output `probs`, reduced
/// as `sum_i w[y_i] * -log p_i[y_i] / sum_i w[y_i]`. Rows whose target weight
/// is zero contribute nothing. The gradient is with respect to the logits.
pub fn weighted_cross_entropy(probs: &Matrix, targets: &[usize], weights: &[f64]) -> CrossEntropy {
    assert_eq!(probs.rows(), targets.len(), "one target per row");
    assert_eq!(probs.cols(), weights.len(), "one weight per class");
    let total: f64 = targets.iter().map(|&y| weights[y]).sum();
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    let mut clamped = 0;
    if total <= 0.0 {
        return CrossEntropy { loss, grad, clamped };
    }
    for (i, &y) in targets.iter().enumerate() {
        let w = weights[y];
        if w == 0.0 {
            continue;
        }
        let p = probs.get(i, y);
        if p < PROB_FLOOR {
            clamped += 1;
        }
        loss -= w * p.max(PROB_FLOOR).ln();
        let scale = w / total;
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = scale * (probs.get(i, j) - if j == y { 1.0 } else { 0.0 });
        }
    }
    CrossEntropy {
        loss: loss / total,
        grad,
        clamped,
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return (0.0, Vec::new());
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_check, softmax, softmax_rows};

    #[test]
    fn uniform_prediction_loss_is_log_classes() {
        let probs = softmax_rows(&Matrix::zeros(3, 4));
        let ce = weighted_cross_entropy(&probs, &[0, 1, 3], &[1.0, 2.0, 1.0, 0.5]);
        assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_no_loss() {
        let probs = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let ce = weighted_cross_entropy(&probs, &[1], &[1.0; 3]);
        assert!(ce.loss <= 1e-9);
        assert_eq!(ce.clamped, 0);
    }

    #[test]
    fn weighted_mean_matches_hand_value() {
        let probs = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let ce = weighted_cross_entropy(&probs, &[0, 1], &[3.0, 1.0]);
        let expected = (3.0 * -(0.5f64.ln()) + -(0.75f64.ln())) / 4.0;
        assert!((ce.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn logit_gradient() {
        let z = vec![0.3, -1.2, 0.8, 0.1, 0.5, -0.4];
        let w = [1.0, 0.5, 2.0];
        let t = [2, 0];
        let f = |x: &[f64]| {
            let rows: Vec<Vec<f64>> = x.chunks(3).map(softmax).collect();
            weighted_cross_entropy(&Matrix::from_rows(&rows).unwrap(), &t, &w).loss
        };
        let rows: Vec<Vec<f64>> = z.chunks(3).map(softmax).collect();
        let ce = weighted_cross_entropy(&Matrix::from_rows(&rows).unwrap(), &t, &w);
        assert!(finite_difference_check(f, &z, ce.grad.data(), 1e-5) < 1e-6);
    }

    #[test]
    fn floor_is_reported() {
        let probs = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let ce = weighted_cross_entropy(&probs, &[1], &[1.0, 1.0]);
        assert_eq!(ce.clamped, 1);
        assert!(ce.loss.is_finite());
    }

    #[test]
    fn mse_gradient() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[0.0, 4.0]);
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, -2.0]);
    }
}
