use super::Module;

/// Largest `|a - b| / max(|a|, |b|, 1e-8)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central differences of `f` around `x`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn finite_difference_check<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    max_relative_error(&numeric_gradient(f, x, eps), analytic)
}

/// `run` evaluates the scalar objective and accumulates gradients into the
/// module. Returns the worst relative error over all parameters.
pub fn check_parameter_gradients<M, F>(module: &mut M, mut run: F, eps: f64) -> f64
where
    M: Module,
    F: FnMut(&mut M) -> f64,
{
    module.zero_grad();
    run(module);
    let analytic = module.flat_grads();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        module.perturb(i, eps);
        let up = run(module);
        module.perturb(i, -2.0 * eps);
        let down = run(module);
        module.perturb(i, eps);
        numeric.push((up - down) / (2.0 * eps));
    }
    module.zero_grad();
    max_relative_error(&numeric, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let g = numeric_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        assert!(finite_difference_check(|x| x[0].sin(), &[0.3], &[0.3f64.cos()], 1e-5) < 1e-8);
        assert!(finite_difference_check(|x| x[0] * x[0], &[1.5], &[3.0], 1e-5) < 1e-10);
    }
}
