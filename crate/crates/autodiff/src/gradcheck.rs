//! Central finite differences, the oracle against which analytic gradients
//! are judged.

pub mod suite;

/// Numeric gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xs = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let fp = f(&xs);
        xs[i] = orig - h;
        let fm = f(&xs);
        xs[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Max over elements of `|a - n| / max(1, |a|, |n|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_polynomial_derivative() {
        // f(x) = x0^2 + 3 x1, grad = (2 x0, 3)
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = central_difference(f, &[2.0, -1.0], 1e-4);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_uses_unit_floor() {
        // Tiny absolute differences on tiny gradients stay small.
        assert!(max_relative_error(&[1e-9], &[2e-9]) < 1e-8);
        assert!((max_relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-12);
    }
}
