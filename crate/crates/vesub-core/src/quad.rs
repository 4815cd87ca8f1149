//! Gauss–Legendre quadrature rules, plus a panel scheme for kernels with an
//! integrable endpoint singularity.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gauss–Legendre rule stored on the reference interval [0, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Nodes and weights by Newton iteration on the Legendre recurrence.
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!(
                "Gauss-Legendre order must be >= 2, got {order}"
            )));
        }
        let n = order;
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let tol = T::epsilon() * T::of(4.0);
        let half = T::of(0.5);
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess on [-1, 1].
            let mut x = T::of((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / dp;
                x = x - dx;
                if dx.abs() <= tol {
                    break;
                }
            }
            let w = T::of(2.0) / ((T::one() - x * x) * dp * dp);
            // Map [-1, 1] -> [0, 1]; symmetric counterpart mirrors around 1/2.
            nodes[i] = (T::one() - x) * half;
            nodes[n - 1 - i] = (T::one() + x) * half;
            weights[i] = w * half;
            weights[n - 1 - i] = w * half;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: Fn(T) -> T>(&self, a: T, b: T, f: F) -> T {
        let len = b - a;
        let mut sum = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(a + len * x);
        }
        sum * len
    }
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for j in 2..=n {
        let j_t = T::from_index(j);
        let p2 = ((T::of(2.0) * j_t - T::one()) * x * p1 - (j_t - T::one()) * p0) / j_t;
        p0 = p1;
        p1 = p2;
    }
    let dp = T::from_index(n) * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// Integral of `f` over (0, b] where `f` may blow up at 0 like t^(-mu), mu < 1.
///
/// Dyadic panels shrink toward the singular endpoint; each panel uses a fixed
/// Gauss rule whose nodes stay strictly inside, so `f(0)` is never evaluated.
pub fn integrate_singular_lower<T: Real, F: Fn(T) -> T>(rule: &GaussLegendre<T>, b: T, f: F) -> T {
    let mut total = T::zero();
    let mut hi = b;
    let floor = b * T::of(1e-15);
    let tol = T::of(1e-14);
    loop {
        let lo = hi * T::of(0.5);
        let panel = rule.integrate(lo, hi, &f);
        total += panel;
        if lo <= floor || (panel.abs() <= tol * total.abs() && total != T::zero()) {
            break;
        }
        hi = lo;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_reproduce_polynomial_integrals() {
        let gl: GaussLegendre<f64> = GaussLegendre::new(8).unwrap();
        // exact for degree <= 15
        let exact = 1.0 / 14.0;
        let got = gl.integrate(0.0, 1.0, |x| x.powi(13));
        assert!((got - exact).abs() < 1e-15, "{got} vs {exact}");
        let got = gl.integrate(-1.0, 3.0, |x| 3.0 * x * x);
        assert!((got - 28.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for order in [2, 5, 16, 32, 64] {
            let gl: GaussLegendre<f64> = GaussLegendre::new(order).unwrap();
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "order {order}: {s}");
        }
    }

    #[test]
    fn high_order_matches_transcendental_integral() {
        let gl: GaussLegendre<f64> = GaussLegendre::new(32).unwrap();
        let got = gl.integrate(0.0, 1.0, |x| x.exp());
        assert!((got - (1f64.exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn singular_panels_integrate_power_law() {
        let gl: GaussLegendre<f64> = GaussLegendre::new(16).unwrap();
        // int_0^b t^{-1/2} dt = 2 sqrt(b)
        let b = 0.37;
        let got = integrate_singular_lower(&gl, b, |t| t.powf(-0.5));
        assert!((got - 2.0 * b.sqrt()).abs() < 1e-12, "{got}");
    }

    #[test]
    fn rejects_order_below_two() {
        assert!(GaussLegendre::<f64>::new(1).is_err());
    }
}
