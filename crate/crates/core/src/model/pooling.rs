//! Max-pooling compressions of projected frame features. Each returns the
//! source row of every pooled entry so gradients can be routed back.

use crate::numerics::Matrix;

/// Pooled tokens plus, for each entry, the row it was taken from.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub tokens: Matrix,
    pub source: Vec<usize>,
}

impl Pooled {
    /// Scatter token gradients back onto the `rows × cols` input.
    pub fn backward(&self, grad: &Matrix, rows: usize) -> Matrix {
        let cols = self.tokens.cols();
        let mut g = Matrix::zeros(rows, cols);
        for (k, &r) in self.source.iter().enumerate() {
            let (m, c) = (k / cols, k % cols);
            let v = g.get(r, c) + grad.get(m, c);
            g.set(r, c, v);
        }
        g
    }
}

/// Running maximum with the earliest row winning ties.
fn fold_rows(e: &Matrix, rows: std::ops::Range<usize>, best: &mut [f64], src: &mut [usize]) {
    for r in rows {
        for (c, &v) in e.row(r).iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                src[c] = r;
            }
        }
    }
}

/// `p` = max over the first `L - M` rows; token `m` = max of `p` and the
/// first `m + 1` of the last `M` rows.
pub fn key_pool(e: &Matrix, m: usize) -> Pooled {
    let (l, d) = e.shape();
    assert!(m >= 1 && m <= l, "need 1 <= M <= L");
    let mut best = vec![f64::NEG_INFINITY; d];
    let mut src = vec![0usize; d];
    fold_rows(e, 0..l - m, &mut best, &mut src);
    let mut tokens = Matrix::zeros(m, d);
    let mut source = Vec::with_capacity(m * d);
    for k in 0..m {
        fold_rows(e, l - m + k..l - m + k + 1, &mut best, &mut src);
        tokens.row_mut(k).copy_from_slice(&best);
        source.extend_from_slice(&src);
    }
    Pooled { tokens, source }
}

/// Tokens over consecutive `interval`-row blocks from the window start.
/// Cumulative tokens keep the running max; disjoint ones restart per block.
pub fn interval_pool(e: &Matrix, interval: usize, cumulative: bool) -> Pooled {
    let (l, d) = e.shape();
    assert!(interval > 0 && l % interval == 0, "interval must divide the window");
    let m = l / interval;
    let mut tokens = Matrix::zeros(m, d);
    let mut source = Vec::with_capacity(m * d);
    let mut best = vec![f64::NEG_INFINITY; d];
    let mut src = vec![0usize; d];
    for k in 0..m {
        if !cumulative {
            best.fill(f64::NEG_INFINITY);
        }
        fold_rows(e, k * interval..(k + 1) * interval, &mut best, &mut src);
        tokens.row_mut(k).copy_from_slice(&best);
        source.extend_from_slice(&src);
    }
    Pooled { tokens, source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use crate::rng::rng_from;
    use rand::Rng;

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn key_pool_hand_case() {
        let k = key_pool(&column(&[1.0, 3.0, 2.0, 5.0]), 2);
        assert_eq!(k.tokens.data(), &[3.0, 5.0]);
        assert_eq!(k.source, vec![1, 3]);
    }

    #[test]
    fn interval_pool_hand_case() {
        let k = interval_pool(&column(&[1.0, 3.0, 2.0, 5.0]), 2, true);
        assert_eq!(k.tokens.data(), &[3.0, 5.0]);
        let k = interval_pool(&column(&[1.0, 3.0, 6.0, 5.0]), 2, false);
        assert_eq!(k.tokens.data(), &[3.0, 6.0]);
    }

    #[test]
    fn monotone_and_final_tokens_agree() {
        let mut rng = rng_from(3);
        let e = Matrix::from_vec(120, 5, (0..600).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let k = key_pool(&e, 6);
        let i = interval_pool(&e, 20, true);
        for pooled in [&k, &i] {
            for r in 1..pooled.tokens.rows() {
                for c in 0..5 {
                    assert!(pooled.tokens.get(r, c) >= pooled.tokens.get(r - 1, c));
                }
            }
        }
        let global: Vec<f64> = (0..5)
            .map(|c| (0..120).map(|r| e.get(r, c)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        assert_eq!(k.tokens.row(5), &global[..]);
        assert_eq!(i.tokens.row(5), &global[..]);
    }

    #[test]
    fn gradient_routes_to_argmax() {
        let mut rng = rng_from(8);
        let x: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gr = Matrix::from_vec(4, 2, r.clone()).unwrap();
        let e = Matrix::from_vec(12, 2, x.clone()).unwrap();
        let f = |v: &[f64]| {
            let p = key_pool(&Matrix::from_vec(12, 2, v.to_vec()).unwrap(), 4);
            p.tokens.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = key_pool(&e, 4).backward(&gr, 12);
        assert!(finite_difference_check(f, &x, g.data(), 1e-6) < 1e-6);
    }
}
