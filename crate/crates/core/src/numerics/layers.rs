use rand::Rng;

use super::ops::{attend, attend_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, Mask};
use super::{mm, mm_nt, mm_tn_acc, Matrix, Module, Parameter};

/// `y = x W + b` with `W: in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
}

impl Linear {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Parameter::new(Matrix::xavier_uniform(inputs, outputs, rng)),
            bias: Some(Parameter::zeros(1, outputs)),
        }
    }

    pub fn without_bias<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Parameter::new(Matrix::xavier_uniform(inputs, outputs, rng)),
            bias: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = mm(x, &self.weight.value);
        if let Some(bias) = &self.bias {
            let b = bias.value.row(0);
            for i in 0..y.rows() {
                for (v, bias) in y.row_mut(i).iter_mut().zip(b) {
                    *v += bias;
                }
            }
        }
        y
    }

    /// Accumulate parameter gradients only.
    pub fn accumulate(&mut self, x: &Matrix, gy: &Matrix) {
        mm_tn_acc(x, gy, &mut self.weight.grad);
        if let Some(bias) = &mut self.bias {
            for (g, s) in bias.grad.data_mut().iter_mut().zip(gy.column_sums()) {
                *g += s;
            }
        }
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&mut self, x: &Matrix, gy: &Matrix) -> Matrix {
        self.accumulate(x, gy);
        mm_nt(gy, &self.weight.value)
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
}

#[derive(Clone, Debug)]
pub struct LnCache {
    /// Pre-affine normalized rows.
    pub xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Parameter::ones(1, dim),
            bias: Parameter::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LnCache) {
        let mut y = Matrix::zeros(x.rows(), x.cols());
        let mut xhat = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let (h, out, s) = layer_norm(x.row(i), self.gain.value.row(0), self.bias.value.row(0));
            xhat.row_mut(i).copy_from_slice(&h);
            y.row_mut(i).copy_from_slice(&out);
            inv_std.push(s);
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LnCache, gy: &Matrix) -> Matrix {
        let mut gx = Matrix::zeros(gy.rows(), gy.cols());
        for i in 0..gy.rows() {
            let g = gy.row(i);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (dx, dgain, dbias) =
                layer_norm_backward(cache.xhat.row(i), cache.inv_std[i], self.gain.value.row(0), g);
            gx.row_mut(i).copy_from_slice(&dx);
            for (a, b) in self.gain.grad.data_mut().iter_mut().zip(&dgain) {
                *a += b;
            }
            for (a, b) in self.bias.grad.data_mut().iter_mut().zip(&dbias) {
                *a += b;
            }
        }
        gx
    }
}

impl Module for LayerNorm {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.gain);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.gain);
        f(&mut self.bias);
    }
}

/// Multi-head attention. With `block = Some(w)` the rows are cut into
/// non-overlapping windows of `w` and each window attends only to itself.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    heads: usize,
}

#[derive(Clone, Debug)]
pub struct MhaCache {
    xq: Matrix,
    xkv: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    ctx: Matrix,
    /// Attention weights per (block, head).
    pub weights: Vec<Matrix>,
    block: Option<usize>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            wq: Linear::new(dim, dim, rng),
            // A key bias only shifts every score of a query equally.
            wk: Linear::without_bias(dim, dim, rng),
            wv: Linear::new(dim, dim, rng),
            wo: Linear::new(dim, dim, rng),
            heads,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn blocks(&self, nq: usize, nk: usize, block: Option<usize>) -> Vec<(usize, usize, usize, usize)> {
        match block {
            None => vec![(0, nq, 0, nk)],
            Some(w) => {
                assert_eq!(nq, nk, "windowed attention is self-attention");
                assert_eq!(nq % w, 0, "rows not divisible by window");
                (0..nq / w).map(|b| (b * w, (b + 1) * w, b * w, (b + 1) * w)).collect()
            }
        }
    }

    pub fn forward(&self, xq: &Matrix, xkv: &Matrix, mask: Mask, block: Option<usize>) -> (Matrix, MhaCache) {
        let q = self.wq.forward(xq);
        let k = self.wk.forward(xkv);
        let v = self.wv.forward(xkv);
        let dim = q.cols();
        let dh = dim / self.heads;
        let mut ctx = Matrix::zeros(q.rows(), dim);
        let mut weights = Vec::new();
        for (q0, q1, k0, k1) in self.blocks(q.rows(), k.rows(), block) {
            for h in 0..self.heads {
                let (c0, c1) = (h * dh, (h + 1) * dh);
                let (out, w) = attend(
                    &q.block(q0, q1, c0, c1),
                    &k.block(k0, k1, c0, c1),
                    &v.block(k0, k1, c0, c1),
                    mask,
                );
                ctx.add_block(q0, c0, &out);
                weights.push(w);
            }
        }
        let y = self.wo.forward(&ctx);
        (
            y,
            MhaCache {
                xq: xq.clone(),
                xkv: xkv.clone(),
                q,
                k,
                v,
                ctx,
                weights,
                block,
            },
        )
    }

    /// Returns `(gxq, gxkv)`. For self-attention the caller adds both.
    pub fn backward(&mut self, cache: &MhaCache, gy: &Matrix) -> (Matrix, Matrix) {
        let gctx = self.wo.backward(&cache.ctx, gy);
        let dim = cache.q.cols();
        let dh = dim / self.heads;
        let mut gq = Matrix::zeros(cache.q.rows(), dim);
        let mut gk = Matrix::zeros(cache.k.rows(), dim);
        let mut gv = Matrix::zeros(cache.v.rows(), dim);
        let blocks = self.blocks(cache.q.rows(), cache.k.rows(), cache.block);
        for (bi, (q0, q1, k0, k1)) in blocks.into_iter().enumerate() {
            if gctx.rows_all_zero(q0, q1) {
                continue;
            }
            for h in 0..self.heads {
                let (c0, c1) = (h * dh, (h + 1) * dh);
                let (dq, dk, dv) = attend_backward(
                    &cache.q.block(q0, q1, c0, c1),
                    &cache.k.block(k0, k1, c0, c1),
                    &cache.v.block(k0, k1, c0, c1),
                    &cache.weights[bi * self.heads + h],
                    &gctx.block(q0, q1, c0, c1),
                );
                gq.add_block(q0, c0, &dq);
                gk.add_block(k0, c0, &dk);
                gv.add_block(k0, c0, &dv);
            }
        }
        let gxq = self.wq.backward(&cache.xq, &gq);
        let mut gxkv = self.wk.backward(&cache.xkv, &gk);
        gxkv.add_assign(&self.wv.backward(&cache.xkv, &gv));
        (gxq, gxkv)
    }
}

impl Module for MultiHeadAttention {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.wq.visit(f);
        self.wk.visit(f);
        self.wv.visit(f);
        self.wo.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.wq.visit_mut(f);
        self.wk.visit_mut(f);
        self.wv.visit_mut(f);
        self.wo.visit_mut(f);
    }
}

/// Two linear layers with a GELU in between.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Clone, Debug)]
pub struct FfnCache {
    x: Matrix,
    pre: Matrix,
    act: Matrix,
}

impl FeedForward {
    pub fn new<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            up: Linear::new(dim, hidden, rng),
            down: Linear::new(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, FfnCache) {
        let pre = self.up.forward(x);
        let mut act = pre.clone();
        act.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        let y = self.down.forward(&act);
        (
            y,
            FfnCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&mut self, cache: &FfnCache, gy: &Matrix) -> Matrix {
        let mut gact = self.down.backward(&cache.act, gy);
        for (g, &p) in gact.data_mut().iter_mut().zip(cache.pre.data()) {
            *g *= gelu_backward(p);
        }
        self.up.backward(&cache.x, &gact)
    }
}

impl Module for FeedForward {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.up.visit(f);
        self.down.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.up.visit_mut(f);
        self.down.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::check_parameter_gradients;
    use crate::rng::rng_from;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dot(a: &Matrix, b: &Matrix) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn linear_gradients() {
        let mut rng = rng_from(1);
        let mut lin = Linear::new(4, 3, &mut rng);
        let x = random(5, 4, 2);
        let r = random(5, 3, 3);
        let err = check_parameter_gradients(
            &mut lin,
            |l| {
                let y = l.forward(&x);
                l.backward(&x, &r);
                dot(&y, &r)
            },
            1e-5,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn windowed_attention_gradients() {
        let mut rng = rng_from(4);
        let mut mha = MultiHeadAttention::new(4, 2, &mut rng);
        let x = random(6, 4, 5);
        let r = random(6, 4, 6);
        let err = check_parameter_gradients(
            &mut mha,
            |m| {
                let (y, cache) = m.forward(&x, &x, Mask::None, Some(3));
                m.backward(&cache, &r);
                dot(&y, &r)
            },
            1e-5,
        );
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn windows_do_not_interact() {
        let mut rng = rng_from(7);
        let mha = MultiHeadAttention::new(4, 2, &mut rng);
        let x = random(8, 4, 8);
        let (y, _) = mha.forward(&x, &x, Mask::None, Some(4));
        let mut x2 = x.clone();
        x2.row_mut(6)[1] += 0.5;
        let (y2, _) = mha.forward(&x2, &x2, Mask::None, Some(4));
        assert_eq!(y.slice_rows(0, 4), y2.slice_rows(0, 4));
        assert_ne!(y.slice_rows(4, 8), y2.slice_rows(4, 8));
    }

    #[test]
    fn feed_forward_and_norm_gradients() {
        let mut rng = rng_from(9);
        let mut ffn = FeedForward::new(3, 5, &mut rng);
        let x = random(4, 3, 10);
        let r = random(4, 3, 11);
        let err = check_parameter_gradients(
            &mut ffn,
            |f| {
                let (y, c) = f.forward(&x);
                f.backward(&c, &r);
                dot(&y, &r)
            },
            1e-5,
        );
        assert!(err < 1e-5, "{err}");
        let mut ln = LayerNorm::new(3);
        ln.gain.value = random(1, 3, 12);
        let err = check_parameter_gradients(
            &mut ln,
            |l| {
                let (y, c) = l.forward(&x);
                l.backward(&c, &r);
                dot(&y, &r)
            },
            1e-5,
        );
        assert!(err < 1e-5, "{err}");
    }
}
