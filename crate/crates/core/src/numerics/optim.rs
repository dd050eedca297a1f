use super::{Module, Parameter};

/// SGD with momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Apply one update and zero the gradients.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) {
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        let mut k = 0;
        module.visit_mut(&mut |p: &mut Parameter| {
            if velocity.len() <= k {
                velocity.push(vec![0.0; p.value.data().len()]);
            }
            let v = &mut velocity[k];
            let grad = p.grad.data().to_vec();
            for ((w, g), vi) in p.value.data_mut().iter_mut().zip(&grad).zip(v.iter_mut()) {
                *vi = mu * *vi + g + wd * *w;
                *w -= lr * *vi;
            }
            p.zero_grad();
            k += 1;
        });
    }
}

/// Rescale gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<M: Module + ?Sized>(module: &mut M, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    module.visit(&mut |p| sq += p.grad.data().iter().map(|g| g * g).sum::<f64>());
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / (norm + 1e-12);
        module.visit_mut(&mut |p| p.grad.data_mut().iter_mut().for_each(|g| *g *= s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    struct One(Parameter);

    impl Module for One {
        fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn momentum_update_by_hand() {
        let mut m = One(Parameter::new(Matrix::row_vector(&[1.0])));
        let mut opt = Sgd::new(0.1, 0.9, 0.0);
        m.0.grad.set(0, 0, 1.0);
        opt.step(&mut m);
        assert!((m.0.value.get(0, 0) - 0.9).abs() < 1e-15);
        assert_eq!(m.0.grad.get(0, 0), 0.0);
        m.0.grad.set(0, 0, 1.0);
        opt.step(&mut m);
        // v = 0.9 * 1 + 1 = 1.9
        assert!((m.0.value.get(0, 0) - 0.71).abs() < 1e-12);
    }

    #[test]
    fn plain_step_on_square() {
        let mut m = One(Parameter::new(Matrix::row_vector(&[1.0])));
        let mut opt = Sgd::new(0.1, 0.0, 0.0);
        opt.step(&mut m);
        assert_eq!(m.0.value.get(0, 0), 1.0);
        m.0.grad.set(0, 0, 2.0);
        opt.step(&mut m);
        assert!((m.0.value.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut m = One(Parameter::new(Matrix::row_vector(&[0.0, 0.0])));
        m.0.grad = Matrix::row_vector(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut m, 1.0), 5.0);
        let g = m.0.grad.data();
        assert!((g[0] - 0.6).abs() < 1e-9 && (g[1] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut m = One(Parameter::new(Matrix::row_vector(&[5.0])));
        let mut opt = Sgd::new(0.1, 0.5, 0.0);
        for _ in 0..200 {
            let w = m.0.value.get(0, 0);
            m.0.grad.set(0, 0, 2.0 * (w - 2.0));
            opt.step(&mut m);
        }
        assert!((m.0.value.get(0, 0) - 2.0).abs() < 1e-6);
    }
}
