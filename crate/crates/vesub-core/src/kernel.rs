//! Special functions and the perturbation kernel.
//!
//! The reformulated problem replaces the variable exponent by its value at
//! t = 0 plus a smooth memory correction driven by the kernel
//!
//! ```text
//! g(t) = int_0^t  t^(-a(z)) / Gamma(1 - a(z)) * a'(z) * (psi(1 - a(z)) - ln t) dz,
//! ```
//!
//! and shifts the source to `F = f + g * u0`. Gamma and digamma are
//! self-contained here; the arguments that arise in practice all lie in (0, 3].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::scalar::Real;
use crate::TimeFn;

/// Gauss order used for the kernel integral; doubling it moves values by
/// well under 1e-11 for the exponent families exercised here.
pub const GTILDE_QUAD_ORDER: usize = 32;

// Lanczos coefficients (Pugh's analysis, r = 10.900511), accurate to ~1e-15
// over the positive axis.
const LANCZOS_R: f64 = 10.900511;
const LANCZOS_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];
const TWO_SQRT_E_OVER_PI: f64 = 1.8603827342052657173362492472666631120594218414085755;

fn lanczos_gamma<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    if x < half {
        let mut s = T::of(LANCZOS_DK[0]);
        for (i, &dk) in LANCZOS_DK.iter().enumerate().skip(1) {
            s += T::of(dk) / (T::from_index(i) - x);
        }
        let pi = T::of(std::f64::consts::PI);
        let e = T::of(std::f64::consts::E);
        pi / ((pi * x).sin() * s * T::of(TWO_SQRT_E_OVER_PI) * ((half - x + T::of(LANCZOS_R)) / e).powf(half - x))
    } else {
        let mut s = T::of(LANCZOS_DK[0]);
        for (i, &dk) in LANCZOS_DK.iter().enumerate().skip(1) {
            s += T::of(dk) / (x + T::from_index(i) - T::one());
        }
        let e = T::of(std::f64::consts::E);
        s * T::of(TWO_SQRT_E_OVER_PI) * ((x - half + T::of(LANCZOS_R)) / e).powf(x - half)
    }
}

// psi(x) by upward recurrence to x >= 12, then the asymptotic series.
fn digamma_series<T: Real>(x: T) -> T {
    let cutoff = T::of(12.0);
    let mut z = x;
    let mut result = T::zero();
    while z < cutoff {
        result -= T::one() / z;
        z += T::one();
    }
    let inv = T::one() / z;
    result += z.ln() - T::of(0.5) * inv;
    let r = inv * inv;
    // Bernoulli tail: 1/12, 1/120, 1/252, 1/240, 1/132
    let s3 = T::of(1.0 / 12.0);
    let s4 = T::of(1.0 / 120.0);
    let s5 = T::of(1.0 / 252.0);
    let s6 = T::of(1.0 / 240.0);
    let s7 = T::of(1.0 / 132.0);
    result - r * (s3 - r * (s4 - r * (s5 - r * (s6 - r * s7))))
}

/// Euler Gamma function for positive arguments.
pub fn gamma_fn<T: Real>(x: T) -> Result<T> {
    if x <= T::zero() || !x.is_finite() {
        return Err(Error::Domain(format!("gamma requires x > 0, got {x}")));
    }
    Ok(lanczos_gamma(x))
}

/// Digamma psi(x) = Gamma'(x)/Gamma(x) for positive arguments.
pub fn digamma_fn<T: Real>(x: T) -> Result<T> {
    if x <= T::zero() || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_series(x))
}

/// beta_nu(t) = t^(nu-1) / Gamma(nu) for nu > 0, t > 0.
pub fn beta_kernel<T: Real>(nu: T, t: T) -> Result<T> {
    if nu <= T::zero() {
        return Err(Error::Domain(format!("beta kernel requires nu > 0, got {nu}")));
    }
    if t <= T::zero() {
        return Err(Error::Domain(format!("beta kernel requires t > 0, got {t}")));
    }
    Ok(t.powf(nu - T::one()) / lanczos_gamma(nu))
}

/// A sampled kernel value, kept for diagnostics of the t -> 0 behaviour.
#[derive(Debug, Clone, Copy)]
pub struct KernelValue<T> {
    pub t: T,
    pub value: T,
}

/// The variable exponent a(t), its derivative, and the anchor values a(0), a(T).
#[derive(Clone)]
pub struct ExponentModel<T> {
    alpha: TimeFn<T>,
    alpha_prime: TimeFn<T>,
    alpha0: T,
    alpha_final: T,
    t_final: T,
}

impl<T: Real> ExponentModel<T> {
    /// Wraps the pair (a, a') after checking the range, the a(0) anchor and
    /// the consistency of `alpha_prime` with a central difference of `alpha`
    /// at 64 interior sample points.
    pub fn new(alpha: TimeFn<T>, alpha_prime: TimeFn<T>, t_final: T) -> Result<Self> {
        if t_final <= T::zero() {
            return Err(Error::Config(format!("final time must be positive, got {t_final}")));
        }
        let alpha0 = alpha(T::zero());
        let alpha_final = alpha(t_final);
        let model = Self { alpha, alpha_prime, alpha0, alpha_final, t_final };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = 64usize;
        if self.alpha0 <= T::zero() || self.alpha0 >= T::one() {
            return Err(Error::Config(format!(
                "alpha(0) must lie in (0,1), got {}",
                self.alpha0
            )));
        }
        let delta = T::of(1e-5) * self.t_final;
        let fd_tol = T::of(1e-6);
        for i in 0..n {
            let t = self.t_final * (T::from_index(i) + T::of(0.5)) / T::from_index(n);
            let a = (self.alpha)(t);
            if a <= T::zero() || a >= T::one() {
                return Err(Error::Config(format!(
                    "alpha({t}) = {a} leaves the admissible range (0,1)"
                )));
            }
            let fd = ((self.alpha)(t + delta) - (self.alpha)(t - delta)) / (delta + delta);
            let ap = (self.alpha_prime)(t);
            if (fd - ap).abs() > fd_tol * T::one().max(ap.abs()) {
                return Err(Error::Config(format!(
                    "alpha_prime({t}) = {ap} disagrees with finite difference {fd}"
                )));
            }
        }
        Ok(())
    }

    /// Constant exponent a(t) = alpha0; the perturbation kernel vanishes.
    pub fn constant(alpha0: T, t_final: T) -> Result<Self> {
        Self::new(
            Arc::new(move |_| alpha0),
            Arc::new(|_| T::zero()),
            t_final,
        )
    }

    /// a(t) = alpha0 + sin(t)/5.
    pub fn sin_perturbed(alpha0: T, t_final: T) -> Result<Self> {
        let fifth = T::of(0.2);
        Self::new(
            Arc::new(move |t: T| alpha0 + fifth * t.sin()),
            Arc::new(move |t: T| fifth * t.cos()),
            t_final,
        )
    }

    /// a(t) = aT + (a0 - aT) (1 - t^2/T^2), so a(0) = a0 and a(T) = aT.
    pub fn quadratic_blend(alpha0: T, alpha_final: T, t_final: T) -> Result<Self> {
        let c = alpha0 - alpha_final;
        let t2 = t_final * t_final;
        Self::new(
            Arc::new(move |t: T| alpha_final + c * (T::one() - t * t / t2)),
            Arc::new(move |t: T| -(c + c) * t / t2),
            t_final,
        )
    }

    #[inline]
    pub fn alpha(&self, t: T) -> T {
        (self.alpha)(t)
    }

    #[inline]
    pub fn alpha_prime(&self, t: T) -> T {
        (self.alpha_prime)(t)
    }

    pub fn alpha0(&self) -> T {
        self.alpha0
    }

    pub fn alpha_final(&self) -> T {
        self.alpha_final
    }

    pub fn t_final(&self) -> T {
        self.t_final
    }
}

/// Evaluator for the perturbation kernel; owns the quadrature rule so a
/// solver run reuses one set of nodes for every evaluation.
#[derive(Clone)]
pub struct Gtilde<T> {
    model: ExponentModel<T>,
    rule: GaussLegendre<T>,
}

impl<T: Real> Gtilde<T> {
    pub fn new(model: ExponentModel<T>) -> Self {
        Self::with_order(model, GTILDE_QUAD_ORDER).expect("default quadrature order is valid")
    }

    pub fn with_order(model: ExponentModel<T>, order: usize) -> Result<Self> {
        Ok(Self { model, rule: GaussLegendre::new(order)? })
    }

    pub fn model(&self) -> &ExponentModel<T> {
        &self.model
    }

    /// Kernel value at t > 0 by fixed-order Gauss-Legendre over [0, t].
    pub fn eval(&self, t: T) -> Result<T> {
        if t <= T::zero() {
            return Err(Error::Domain(format!("kernel requires t > 0, got {t}")));
        }
        let ln_t = t.ln();
        Ok(self.rule.integrate(T::zero(), t, |z| {
            let a = self.model.alpha(z);
            let ap = self.model.alpha_prime(z);
            let one_minus_a = T::one() - a;
            (-a * ln_t).exp() / lanczos_gamma(one_minus_a) * ap * (digamma_series(one_minus_a) - ln_t)
        }))
    }

    /// Kernel samples for diagnostics.
    pub fn sample(&self, ts: &[T]) -> Result<Vec<KernelValue<T>>> {
        ts.iter()
            .map(|&t| Ok(KernelValue { t, value: self.eval(t)? }))
            .collect()
    }

    /// Shifted source F(x, t) = f(x, t) + g(t) u0(x).
    pub fn assemble_source<F, U>(&self, f: &F, u0: &U, x: &[T], t: T) -> Result<T>
    where
        F: Fn(&[T], T) -> T + ?Sized,
        U: Fn(&[T]) -> T + ?Sized,
    {
        Ok(f(x, t) + self.eval(t)? * u0(x))
    }
}

/// One-shot kernel evaluation with the default rule.
pub fn eval_g_tilde<T: Real>(model: &ExponentModel<T>, t: T) -> Result<T> {
    Gtilde::new(model.clone()).eval(t)
}

/// One-shot shifted source with the default rule.
pub fn assemble_source<T: Real, F, U>(model: &ExponentModel<T>, f: &F, u0: &U, x: &[T], t: T) -> Result<T>
where
    F: Fn(&[T], T) -> T + ?Sized,
    U: Fn(&[T]) -> T + ?Sized,
{
    Gtilde::new(model.clone()).assemble_source(f, u0, x, t)
}
