use super::Matrix;
use crate::error::{Result, SwagError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `a · b`. Shapes are checked by the caller.
pub(crate) fn mm(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows(), "mm inner dimension");
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, m);
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..n {
        let arow = &a.data()[i * k..(i + 1) * k];
        let orow = &mut od[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a · bᵀ`.
pub(crate) fn mm_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.cols(), "mm_nt inner dimension");
    let (n, m) = (a.rows(), b.rows());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        if arow.iter().all(|&v| v == 0.0) {
            continue;
        }
        for j in 0..m {
            let s: f64 = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
            out.set(i, j, s);
        }
    }
    out
}

/// `out += aᵀ · b`, skipping rows of `b` that are entirely zero.
pub(crate) fn mm_tn_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert_eq!(a.rows(), b.rows(), "mm_tn rows");
    assert_eq!(out.shape(), (a.cols(), b.cols()), "mm_tn output");
    let m = b.cols();
    for r in 0..a.rows() {
        let brow = b.row(r);
        if brow.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            let orow = &mut out.data_mut()[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ari * bv;
            }
        }
    }
}

/// Gradients of `a · b` with respect to `a` and `b`.
pub fn matmul_backward(a: &Matrix, b: &Matrix, grad_out: &Matrix) -> Result<(Matrix, Matrix)> {
    if a.cols() != b.rows() || grad_out.shape() != (a.rows(), b.cols()) {
        return Err(SwagError::Shape {
            op: "matmul_backward",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let ga = mm_nt(grad_out, b);
    let mut gb = Matrix::zeros(b.rows(), b.cols());
    mm_tn_acc(a, grad_out, &mut gb);
    Ok((ga, gb))
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Input gradient of softmax given its output `y` and upstream `gy`.
pub fn softmax_backward(y: &[f64], gy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
    y.iter().zip(gy).map(|(yi, gi)| yi * (gi - dot)).collect()
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        out.row_mut(i).copy_from_slice(&softmax(logits.row(i)));
    }
    out
}

pub fn softmax_rows_backward(y: &Matrix, gy: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        out.row_mut(i)
            .copy_from_slice(&softmax_backward(y.row(i), gy.row(i)));
    }
    out
}

/// Normalized vector (pre-affine), its affine output, and `1/σ`.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(h, (g, b))| h * g + b)
        .collect();
    (xhat, y, inv_std)
}

/// Returns `(gx, ggain, gbias)`.
pub fn layer_norm_backward(
    xhat: &[f64],
    inv_std: f64,
    gain: &[f64],
    gy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = xhat.len() as f64;
    let gxhat: Vec<f64> = gy.iter().zip(gain).map(|(g, w)| g * w).collect();
    let sum_g: f64 = gxhat.iter().sum();
    let sum_gx: f64 = gxhat.iter().zip(xhat).map(|(g, h)| g * h).sum();
    let gx = gxhat
        .iter()
        .zip(xhat)
        .map(|(g, h)| inv_std / n * (n * g - sum_g - h * sum_gx))
        .collect();
    let ggain = gy.iter().zip(xhat).map(|(g, h)| g * h).collect();
    (gx, ggain, gy.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    None,
    /// Query `i` sees keys `j <= i + (keys - queries)`.
    Causal,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    /// Row-stochastic attention weights, queries × keys.
    pub weights: Matrix,
}

pub(crate) fn attend(q: &Matrix, k: &Matrix, v: &Matrix, mask: Mask) -> (Matrix, Matrix) {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut scores = mm_nt(q, k);
    let (nq, nk) = (q.rows(), k.rows());
    let offset = nk as isize - nq as isize;
    for i in 0..nq {
        let row = scores.row_mut(i);
        let limit = i as isize + offset;
        let mut max = f64::NEG_INFINITY;
        for (j, s) in row.iter_mut().enumerate() {
            if mask == Mask::Causal && j as isize > limit {
                *s = f64::NEG_INFINITY;
            } else {
                *s *= scale;
                max = max.max(*s);
            }
        }
        let mut sum = 0.0;
        for s in row.iter_mut() {
            *s = if s.is_finite() { (*s - max).exp() } else { 0.0 };
            sum += *s;
        }
        row.iter_mut().for_each(|s| *s /= sum);
    }
    let out = mm(&scores, v);
    (out, scores)
}

pub(crate) fn attend_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    weights: &Matrix,
    gout: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let gweights = mm_nt(gout, v);
    let mut gv = Matrix::zeros(v.rows(), v.cols());
    mm_tn_acc(weights, gout, &mut gv);
    let mut gscores = softmax_rows_backward(weights, &gweights);
    gscores.data_mut().iter_mut().for_each(|g| *g *= scale);
    let gq = mm(&gscores, k);
    let mut gk = Matrix::zeros(k.rows(), k.cols());
    mm_tn_acc(&gscores, q, &mut gk);
    (gq, gk, gv)
}

/// Scaled dot-product attention with `1/sqrt(d_k)` scaling.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: Mask) -> Result<(Matrix, AttentionCache)> {
    if q.cols() != k.cols() || k.rows() != v.rows() || k.rows() == 0 {
        return Err(SwagError::Shape {
            op: "attention",
            left: q.shape(),
            right: k.shape(),
        });
    }
    if mask == Mask::Causal && k.rows() < q.rows() {
        return Err(SwagError::Shape {
            op: "causal attention",
            left: q.shape(),
            right: k.shape(),
        });
    }
    let (out, weights) = attend(q, k, v, mask);
    Ok((out, AttentionCache { weights }))
}

/// Returns `(gq, gk, gv)`.
pub fn attention_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cache: &AttentionCache,
    gout: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    attend_backward(q, k, v, &cache.weights, gout)
}

/// `[sin(p/10000^(0/d)), cos(p/10000^(0/d)), sin(p/10000^(2/d)), ...]`.
pub fn sinusoidal_positional_encoding(position: usize, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(SwagError::Config(format!(
            "positional encoding dimension {dim} must be even"
        )));
    }
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let angle = position as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_backward(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use crate::rng::rng_from;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn weights(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let a = random(3, 4, 1);
        let b = random(4, 2, 2);
        let r = weights(6, 3);
        let g = Matrix::from_vec(3, 2, r.clone()).unwrap();
        let (ga, gb) = matmul_backward(&a, &b, &g).unwrap();
        let f = |x: &[f64]| {
            let a = Matrix::from_vec(3, 4, x.to_vec()).unwrap();
            dot(a.matmul(&b).unwrap().data(), &r)
        };
        assert!(finite_difference_check(f, a.data(), ga.data(), 1e-5) < 1e-6);
        let f = |x: &[f64]| {
            let b = Matrix::from_vec(4, 2, x.to_vec()).unwrap();
            dot(a.matmul(&b).unwrap().data(), &r)
        };
        assert!(finite_difference_check(f, b.data(), gb.data(), 1e-5) < 1e-6);
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let y = softmax(&[0.0; 8]);
        assert!(y.iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let z = [0.3, -1.2, 2.5, 0.0];
        let a = softmax(&z);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(a.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn softmax_gradient() {
        let z = weights(6, 4);
        let r = weights(6, 5);
        let y = softmax(&z);
        let g = softmax_backward(&y, &r);
        let err = finite_difference_check(|x| dot(&softmax(x), &r), &z, &g, 1e-5);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn layer_norm_contract() {
        let (xhat, _, _) = layer_norm(&[3.0; 5], &[1.0; 5], &[0.0; 5]);
        assert!(xhat.iter().all(|&v| v == 0.0));
        let x = weights(9, 6);
        let (xhat, _, _) = layer_norm(&x, &[1.0; 9], &[0.0; 9]);
        let mean = xhat.iter().sum::<f64>() / 9.0;
        let var = xhat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert!(mean.abs() <= 1e-9);
        // The epsilon in the denominator pulls the variance slightly below 1.
        let expected = {
            let m = x.iter().sum::<f64>() / 9.0;
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 9.0;
            v / (v + LAYER_NORM_EPS)
        };
        assert!((var - expected).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
        // With row variance well above the epsilon the unit-variance bound is tight.
        let wide: Vec<f64> = x.iter().map(|v| v * 20.0).collect();
        let (xhat, _, _) = layer_norm(&wide, &[1.0; 9], &[0.0; 9]);
        let var = xhat.iter().map(|v| v * v).sum::<f64>() / 9.0;
        assert!((var - 1.0).abs() < 1e-6, "{var}");
    }

    #[test]
    fn layer_norm_gradient() {
        let x = weights(7, 7);
        let gain = weights(7, 8);
        let bias = weights(7, 9);
        let r = weights(7, 10);
        let (xhat, _, inv_std) = layer_norm(&x, &gain, &bias);
        let (gx, ggain, gbias) = layer_norm_backward(&xhat, inv_std, &gain, &r);
        let err = finite_difference_check(|v| dot(&layer_norm(v, &gain, &bias).1, &r), &x, &gx, 1e-5);
        assert!(err < 1e-5, "{err}");
        let err = finite_difference_check(|g| dot(&layer_norm(&x, g, &bias).1, &r), &gain, &ggain, 1e-5);
        assert!(err < 1e-5, "{err}");
        let err = finite_difference_check(|b| dot(&layer_norm(&x, &gain, b).1, &r), &bias, &gbias, 1e-5);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn single_key_returns_value_row() {
        let q = random(3, 4, 11);
        let k = random(1, 4, 12);
        let v = random(1, 5, 13);
        let (out, cache) = attention(&q, &k, &v, Mask::None).unwrap();
        for i in 0..3 {
            assert_eq!(out.row(i), v.row(0));
            assert_eq!(cache.weights.row(i), &[1.0]);
        }
    }

    #[test]
    fn causal_first_position_sees_only_itself() {
        let q = random(4, 4, 14);
        let k = random(4, 4, 15);
        let v = random(4, 3, 16);
        let (out, cache) = attention(&q, &k, &v, Mask::Causal).unwrap();
        assert_eq!(cache.weights.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.row(0), v.row(0));
        for i in 0..4 {
            let s: f64 = cache.weights.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in i + 1..4 {
                assert_eq!(cache.weights.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn attention_gradients() {
        for mask in [Mask::None, Mask::Causal] {
            let q = random(4, 3, 20);
            let k = random(4, 3, 21);
            let v = random(4, 2, 22);
            let r = weights(8, 23);
            let g = Matrix::from_vec(4, 2, r.clone()).unwrap();
            let (_, cache) = attention(&q, &k, &v, mask).unwrap();
            let (gq, gk, gv) = attention_backward(&q, &k, &v, &cache, &g);
            let run = |q: &Matrix, k: &Matrix, v: &Matrix| dot(attention(q, k, v, mask).unwrap().0.data(), &r);
            let m = |x: &[f64], c| Matrix::from_vec(4, c, x.to_vec()).unwrap();
            assert!(finite_difference_check(|x| run(&m(x, 3), &k, &v), q.data(), gq.data(), 1e-5) < 1e-5);
            assert!(finite_difference_check(|x| run(&q, &m(x, 3), &v), k.data(), gk.data(), 1e-5) < 1e-5);
            assert!(finite_difference_check(|x| run(&q, &k, &m(x, 2)), v.data(), gv.data(), 1e-5) < 1e-5);
        }
    }

    #[test]
    fn attention_shape_errors() {
        assert!(attention(&Matrix::zeros(2, 3), &Matrix::zeros(2, 4), &Matrix::zeros(2, 1), Mask::None).is_err());
        assert!(attention(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3), &Matrix::zeros(3, 1), Mask::None).is_err());
    }

    #[test]
    fn positional_encoding() {
        let p0 = sinusoidal_positional_encoding(0, 6).unwrap();
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(sinusoidal_positional_encoding(3, 5).is_err());
        let encs: Vec<_> = (0..50).map(|p| sinusoidal_positional_encoding(p, 4).unwrap()).collect();
        for a in 0..50 {
            for b in a + 1..50 {
                assert_ne!(encs[a], encs[b]);
            }
        }
        // Closed form recomputation.
        let p = sinusoidal_positional_encoding(7, 8).unwrap();
        for i in 0..4 {
            let w = (-(2.0 * i as f64 / 8.0) * 10000f64.ln()).exp();
            assert!((p[2 * i] - (7.0 * w).sin()).abs() < 1e-12);
            assert!((p[2 * i + 1] - (7.0 * w).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_derivative() {
        let xs = weights(10, 30).iter().map(|v| v * 3.0).collect::<Vec<_>>();
        let analytic: Vec<f64> = xs.iter().map(|&x| gelu_backward(x)).collect();
        let err = finite_difference_check(
            |v| v.iter().map(|&x| gelu(x)).sum(),
            &xs,
            &analytic,
            1e-5,
        );
        assert!(err < 1e-7);
    }
}
