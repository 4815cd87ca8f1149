//! Graded temporal mesh and the discrete weight tables: L1 weights `a`,
//! memory quadrature weights `omega`, and the complementary kernels `P`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{gamma_fn, Gtilde};
use crate::scalar::Real;

/// Time levels t_n = T (n/N)^r with nondecreasing steps.
#[derive(Debug, Clone)]
pub struct GradedMesh<T> {
    levels: Vec<T>,
    steps: Vec<T>,
    grading: T,
}

impl<T: Real> GradedMesh<T> {
    pub fn new(n_steps: usize, t_final: T, grading: T) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("mesh needs at least one step".into()));
        }
        if t_final <= T::zero() {
            return Err(Error::Config(format!("final time must be positive, got {t_final}")));
        }
        if grading < T::one() {
            return Err(Error::Config(format!("grading index must be >= 1, got {grading}")));
        }
        let n_t = T::from_index(n_steps);
        let mut levels = Vec::with_capacity(n_steps + 1);
        levels.push(T::zero());
        for n in 1..n_steps {
            levels.push(t_final * (T::from_index(n) / n_t).powf(grading));
        }
        levels.push(t_final);
        let mut steps = Vec::with_capacity(n_steps);
        let slack = T::of(16.0) * T::epsilon();
        for n in 1..=n_steps {
            let tau = levels[n] - levels[n - 1];
            if tau <= T::zero() {
                return Err(Error::Config(format!("degenerate step at level {n}")));
            }
            if n >= 2 && tau < steps[n - 2] * (T::one() - slack) {
                return Err(Error::Config(format!("steps decrease at level {n}")));
            }
            steps.push(tau);
        }
        Ok(Self { levels, steps, grading })
    }

    /// Number of steps N.
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn t_final(&self) -> T {
        *self.levels.last().unwrap()
    }

    pub fn grading(&self) -> T {
        self.grading
    }

    /// t_n for 0 <= n <= N.
    pub fn level(&self, n: usize) -> T {
        self.levels[n]
    }

    /// tau_n = t_n - t_{n-1} for 1 <= n <= N.
    pub fn step(&self, n: usize) -> T {
        self.steps[n - 1]
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }
}

/// x^p - y^p for x > y >= 0 without cancellation: when the ratio is close to
/// one the difference goes through expm1/ln_1p, otherwise plain subtraction
/// is already accurate.
fn power_difference<T: Real>(x: T, y: T, p: T) -> T {
    if y == T::zero() {
        return x.powf(p);
    }
    let gap = x - y;
    if x < y + y {
        y.powf(p) * (p * (gap / y).ln_1p()).exp_m1()
    } else {
        x.powf(p) - y.powf(p)
    }
}

/// One row of nonuniform L1 weights: `weights[j]` holds a^{(n)}_j for
/// j = 0..n-1, a strictly positive nonincreasing sequence.
#[derive(Debug, Clone)]
pub struct L1WeightRow<T> {
    pub n: usize,
    pub weights: Vec<T>,
}

impl<T: Real> L1WeightRow<T> {
    pub fn compute(mesh: &GradedMesh<T>, alpha0: T, n: usize) -> Result<Self> {
        if n == 0 || n > mesh.n_steps() {
            return Err(Error::Config(format!("step index {n} outside 1..={}", mesh.n_steps())));
        }
        if alpha0 <= T::zero() || alpha0 >= T::one() {
            return Err(Error::Config(format!("alpha0 must lie in (0,1), got {alpha0}")));
        }
        let p = T::one() - alpha0;
        let gamma2 = gamma_fn(T::of(2.0) - alpha0)?;
        let t_n = mesh.level(n);
        let mut weights = vec![T::zero(); n];
        for k in 1..=n {
            let x = t_n - mesh.level(k - 1);
            let y = t_n - mesh.level(k);
            weights[n - k] = power_difference(x, y, p) / (mesh.step(k) * gamma2);
        }
        Ok(Self { n, weights })
    }

    /// a^{(n)}_j.
    #[inline]
    pub fn a(&self, j: usize) -> T {
        self.weights[j]
    }

    /// a^{(n)}_0, the diagonal weight.
    #[inline]
    pub fn diagonal(&self) -> T {
        self.weights[0]
    }
}

/// One row of memory quadrature weights: `weights[j-1]` holds
/// omega_{n,j} = g(t_n - t_{j-1}) - g(t_n - t_j), with g(0) taken as 0.
#[derive(Debug, Clone)]
pub struct ConvWeightRow<T> {
    pub n: usize,
    pub weights: Vec<T>,
}

impl<T: Real> ConvWeightRow<T> {
    pub fn compute(mesh: &GradedMesh<T>, gtilde: &Gtilde<T>, n: usize) -> Result<Self> {
        if n == 0 || n > mesh.n_steps() {
            return Err(Error::Config(format!("step index {n} outside 1..={}", mesh.n_steps())));
        }
        let t_n = mesh.level(n);
        let mut g = Vec::with_capacity(n + 1);
        for j in 0..n {
            g.push(gtilde.eval(t_n - mesh.level(j))?);
        }
        g.push(T::zero());
        Ok(Self::from_endpoint_values(n, &g))
    }

    fn from_endpoint_values(n: usize, g: &[T]) -> Self {
        let weights = (1..=n).map(|j| g[j - 1] - g[j]).collect();
        Self { n, weights }
    }

    /// omega_{n,j} for 1 <= j <= n.
    #[inline]
    pub fn omega(&self, j: usize) -> T {
        self.weights[j - 1]
    }

    /// Telescoping sum; equals g(t_n) up to rounding.
    pub fn sum(&self) -> T {
        self.weights.iter().copied().fold(T::zero(), |acc, w| acc + w)
    }
}

/// Full lower-triangular omega table plus the kernel values g(t_n).
///
/// Every distinct time difference t_n - t_j is evaluated exactly once: the
/// arguments are deduplicated first and the unique set is integrated in
/// parallel, which is what makes uniform meshes (heavily repeated
/// differences) cheap without special-casing them.
pub struct ConvWeightTable<T> {
    rows: Vec<ConvWeightRow<T>>,
    g_levels: Vec<T>,
}

impl<T: Real> ConvWeightTable<T> {
    pub fn build(mesh: &GradedMesh<T>, gtilde: &Gtilde<T>) -> Result<Self> {
        let n_steps = mesh.n_steps();
        let mut args = Vec::with_capacity(n_steps * (n_steps + 1) / 2);
        for n in 1..=n_steps {
            let t_n = mesh.level(n);
            for j in 0..n {
                args.push(t_n - mesh.level(j));
            }
        }
        args.par_sort_unstable_by(|a, b| a.partial_cmp(b).expect("mesh differences are ordered"));
        args.dedup();
        let values: Vec<T> = args
            .par_iter()
            .map(|&t| gtilde.eval(t))
            .collect::<Result<_>>()?;
        let lookup = |t: T| -> T {
            let idx = args
                .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite"))
                .expect("argument was collected");
            values[idx]
        };
        let rows: Vec<ConvWeightRow<T>> = (1..=n_steps)
            .into_par_iter()
            .map(|n| {
                let t_n = mesh.level(n);
                let mut g = Vec::with_capacity(n + 1);
                for j in 0..n {
                    g.push(lookup(t_n - mesh.level(j)));
                }
                g.push(T::zero());
                ConvWeightRow::from_endpoint_values(n, &g)
            })
            .collect();
        let mut g_levels = Vec::with_capacity(n_steps + 1);
        g_levels.push(T::zero());
        for n in 1..=n_steps {
            g_levels.push(lookup(mesh.level(n) - mesh.level(0)));
        }
        Ok(Self { rows, g_levels })
    }

    pub fn row(&self, n: usize) -> &ConvWeightRow<T> {
        &self.rows[n - 1]
    }

    /// g(t_n) with g(t_0) = 0.
    pub fn g_at_level(&self, n: usize) -> T {
        self.g_levels[n]
    }

    pub fn n_steps(&self) -> usize {
        self.rows.len()
    }
}

/// Complementary discrete convolution kernels P^{(n)}_{n-k}.
///
/// `rows[n-1][n-k]` holds P^{(n)}_{n-k}; the table is only needed for
/// diagnostics, the marching solver never touches it.
pub struct ComplementaryKernelTable<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> ComplementaryKernelTable<T> {
    pub fn compute(mesh: &GradedMesh<T>, alpha0: T) -> Result<Self> {
        let n_steps = mesh.n_steps();
        let l1: Vec<L1WeightRow<T>> = (1..=n_steps)
            .into_par_iter()
            .map(|n| L1WeightRow::compute(mesh, alpha0, n))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<T>> = (1..=n_steps)
            .into_par_iter()
            .map(|n| {
                let mut row = vec![T::zero(); n];
                row[0] = T::one() / l1[n - 1].diagonal();
                for k in (1..n).rev() {
                    let mut sum = T::zero();
                    for j in (k + 1)..=n {
                        let a_row = &l1[j - 1];
                        sum += (a_row.a(j - k - 1) - a_row.a(j - k)) * row[n - j];
                    }
                    row[n - k] = sum / l1[k - 1].diagonal();
                }
                row
            })
            .collect();
        Ok(Self { rows })
    }

    /// P^{(n)}_{n-k} for 1 <= k <= n.
    pub fn p(&self, n: usize, k: usize) -> T {
        self.rows[n - 1][n - k]
    }

    pub fn n_steps(&self) -> usize {
        self.rows.len()
    }
}

/// Outcome of a single bound or identity check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Worst signed margin; negative or tiny positive means the property held.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn from_margin<T: Real>(worst: T, tolerance: f64) -> Self {
        let worst = worst.as_f64();
        Self { passed: worst <= tolerance, worst, tolerance }
    }
}

/// Report for the three structural properties of the complementary kernels:
/// (i) positivity with the Gamma(2-a0) tau_k^{a0} cap, (ii) the discrete
/// orthogonality identity, (iii) the q = 0, 1 convolution bounds.
#[derive(Debug, Clone, Serialize)]
pub struct KernelPropertyReport {
    pub bound: CheckOutcome,
    pub orthogonality: CheckOutcome,
    pub convolution_q0: CheckOutcome,
    pub convolution_q1: CheckOutcome,
}

impl KernelPropertyReport {
    pub fn passed(&self) -> bool {
        self.bound.passed
            && self.orthogonality.passed
            && self.convolution_q0.passed
            && self.convolution_q1.passed
    }
}

pub const KERNEL_BOUND_SLACK: f64 = 1e-12;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Verifies properties (i)-(iii) of a complementary kernel table and returns
/// the worst margins; failures are reported, never thrown.
pub fn check_lemma_bounds<T: Real>(
    table: &ComplementaryKernelTable<T>,
    mesh: &GradedMesh<T>,
    alpha0: T,
) -> Result<KernelPropertyReport> {
    let n_steps = table.n_steps();
    let gamma2 = gamma_fn(T::of(2.0) - alpha0)?;
    let gamma1m = gamma_fn(T::one() - alpha0)?;
    let gamma1p = gamma_fn(T::one() + alpha0)?;

    let mut worst_bound = T::neg_infinity();
    let mut worst_orth = T::zero();
    let mut worst_q0 = T::neg_infinity();
    let mut worst_q1 = T::neg_infinity();

    let l1: Vec<L1WeightRow<T>> = (1..=n_steps)
        .map(|n| L1WeightRow::compute(mesh, alpha0, n))
        .collect::<Result<_>>()?;

    for n in 1..=n_steps {
        let mut q0_sum = T::zero();
        let mut q1_sum = T::zero();
        for k in 1..=n {
            let p = table.p(n, k);
            let cap = gamma2 * mesh.step(k).powf(alpha0);
            worst_bound = worst_bound.max(-p).max(p - cap);
            // (iii): beta_{1-a0}(t_k) and beta_1(t_k) = 1
            q0_sum += p * mesh.level(k).powf(-alpha0) / gamma1m;
            q1_sum += p;
            // (ii): sum_{j=k}^n P^{(n)}_{n-j} a^{(j)}_{j-k} = 1
            let mut orth = T::zero();
            for j in k..=n {
                orth += table.p(n, j) * l1[j - 1].a(j - k);
            }
            worst_orth = worst_orth.max((orth - T::one()).abs());
        }
        worst_q0 = worst_q0.max(q0_sum - T::one());
        worst_q1 = worst_q1.max(q1_sum - mesh.level(n).powf(alpha0) / gamma1p);
    }

    Ok(KernelPropertyReport {
        bound: CheckOutcome::from_margin(worst_bound, KERNEL_BOUND_SLACK),
        orthogonality: CheckOutcome::from_margin(worst_orth, ORTHOGONALITY_TOL),
        convolution_q0: CheckOutcome::from_margin(worst_q0, KERNEL_BOUND_SLACK),
        convolution_q1: CheckOutcome::from_margin(worst_q1, KERNEL_BOUND_SLACK),
    })
}
