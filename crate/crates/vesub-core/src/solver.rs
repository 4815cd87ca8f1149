//! Time marching.
//!
//! Each step solves `(c_mass M + c_stiff S) U^n = rhs` where the implicit
//! coefficients fold in the diagonal L1 weight and the self-referential part
//! of the memory quadrature: the first step's memory term is fully implicit,
//! later steps contribute half of the midpoint value `U^{n-1/2}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{gamma_fn, ExponentModel, Gtilde};
use crate::mesh::{power_difference, ConvWeightRow, ConvWeightTable, GradedMesh, L1WeightRow};
use crate::quad::{integrate_singular_lower, GaussLegendre};
use crate::scalar::Real;
use crate::space::{interpolate_nodal, norm2, SpatialGrid, SpatialOperators};
use crate::{SpaceFn, SpaceTimeFn, TimeFn};

/// Problem data for the variable-exponent equation on (0,1)^d.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub grid: SpatialGrid<T>,
    pub mesh: GradedMesh<T>,
    pub model: ExponentModel<T>,
    pub u0: SpaceFn<T>,
    pub f: SpaceTimeFn<T>,
}

impl<T: Real> ProblemSpec<T> {
    fn validate(&self) -> Result<()> {
        if (self.model.t_final() - self.mesh.t_final()).abs()
            > T::of(1e-12) * self.mesh.t_final()
        {
            return Err(Error::Config(format!(
                "exponent model horizon {} does not match mesh horizon {}",
                self.model.t_final(),
                self.mesh.t_final()
            )));
        }
        Ok(())
    }
}

/// Memory kernel for the generalized scheme; `mu` is the strength of the
/// integrable singularity at the origin.
#[derive(Clone)]
pub enum MemoryKernel<T> {
    /// K(t) = coeff * t^(-mu); integrated exactly through its antiderivative.
    PowerLaw { coeff: T, mu: T },
    /// Arbitrary kernel; integrated by Gauss panels that avoid the singular
    /// endpoint.
    Custom { kernel: TimeFn<T>, mu: T },
}

impl<T: Real> MemoryKernel<T> {
    pub fn mu(&self) -> T {
        match self {
            Self::PowerLaw { mu, .. } | Self::Custom { mu, .. } => *mu,
        }
    }

    pub fn eval(&self, t: T) -> T {
        match self {
            Self::PowerLaw { coeff, mu } => *coeff * t.powf(-*mu),
            Self::Custom { kernel, .. } => kernel(t),
        }
    }

    /// Integral of K over [lo, hi], 0 <= lo < hi.
    fn integrate(&self, rule: &GaussLegendre<T>, lo: T, hi: T) -> T {
        match self {
            Self::PowerLaw { coeff, mu } => {
                let p = T::one() - *mu;
                *coeff * power_difference(hi, lo, p) / p
            }
            Self::Custom { kernel, .. } => {
                if lo == T::zero() {
                    integrate_singular_lower(rule, hi, |u| kernel(u))
                } else {
                    rule.integrate(lo, hi, |u| kernel(u))
                }
            }
        }
    }
}

/// Problem data for the generalized scheme with memory operator
/// A = w1 I + w2 Laplacian.
#[derive(Clone)]
pub struct GeneralMemorySpec<T> {
    pub grid: SpatialGrid<T>,
    pub mesh: GradedMesh<T>,
    pub alpha0: T,
    pub kernel: MemoryKernel<T>,
    pub w1: T,
    pub w2: T,
    pub u0: SpaceFn<T>,
    pub f: SpaceTimeFn<T>,
}

impl<T: Real> GeneralMemorySpec<T> {
    fn validate(&self) -> Result<()> {
        if self.alpha0 <= T::zero() || self.alpha0 >= T::one() {
            return Err(Error::Config(format!("alpha0 must lie in (0,1), got {}", self.alpha0)));
        }
        let mu = self.kernel.mu();
        if mu <= T::zero() || mu >= T::one() {
            return Err(Error::Config(format!("mu must lie in (0,1), got {mu}")));
        }
        if self.w1.abs() > T::one() || self.w2.abs() > T::one() {
            return Err(Error::Config(format!(
                "operator weights must satisfy |w| <= 1, got ({}, {})",
                self.w1, self.w2
            )));
        }
        // sampled boundedness of |K(t)| t^mu on (0, T]
        let t_final = self.mesh.t_final();
        let mut t = t_final;
        for _ in 0..32 {
            let scaled = self.kernel.eval(t).abs() * t.powf(mu);
            if !scaled.is_finite() || scaled > T::of(1e8) {
                return Err(Error::Config(format!(
                    "kernel is not t^(-mu)-bounded: |K({t})| t^mu = {scaled}"
                )));
            }
            t = t * T::of(0.5);
        }
        Ok(())
    }
}

/// Nodal trajectories U^0..U^N on the interior grid.
pub struct SolutionHistory<T> {
    pub grid: SpatialGrid<T>,
    pub mesh: GradedMesh<T>,
    pub states: Vec<Vec<T>>,
}

impl<T: Real> SolutionHistory<T> {
    pub fn state(&self, n: usize) -> &[T] {
        &self.states[n]
    }

    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("history holds U^0")
    }
}

/// Implicit coefficient pair (c_mass, c_stiff = 1) of step n for the main
/// scheme: the diagonal L1 weight plus the implicit share of omega_{n,n}.
pub fn step_matrix_coeffs<T: Real>(
    mesh: &GradedMesh<T>,
    alpha0: T,
    omega_row: &ConvWeightRow<T>,
    n: usize,
) -> Result<(T, T)> {
    if n == 0 || n > mesh.n_steps() || omega_row.n != n {
        return Err(Error::Config(format!("step index {n} does not match the weight row")));
    }
    let a0 = mesh.step(n).powf(-alpha0) / gamma_fn(T::of(2.0) - alpha0)?;
    let theta = implicit_share::<T>(n);
    Ok((a0 + theta * omega_row.omega(n), T::one()))
}

#[inline]
fn implicit_share<T: Real>(n: usize) -> T {
    if n == 1 {
        T::one()
    } else {
        T::of(0.5)
    }
}

/// Marches the fully discrete scheme for a variable-exponent problem.
pub fn march<T: Real>(spec: &ProblemSpec<T>) -> Result<SolutionHistory<T>> {
    spec.validate()?;
    let ops = SpatialOperators::build(&spec.grid)?;
    let gtilde = Gtilde::new(spec.model.clone());
    let conv = ConvWeightTable::build(&spec.mesh, &gtilde)?;
    let u0_nodal = interpolate_nodal(&spec.grid, |x| (spec.u0)(x));
    let coords = node_coords(&spec.grid);
    let f = spec.f.clone();
    let u0 = u0_nodal.clone();
    let dim = spec.grid.dim();
    let source = move |n: usize, t_n: T, out: &mut [T]| {
        let g_n = conv.g_at_level(n);
        for (i, (c, o)) in coords.iter().zip(out.iter_mut()).enumerate() {
            *o = f(&c[..dim], t_n) + g_n * u0[i];
        }
    };
    time_march(
        &spec.grid,
        &ops,
        &spec.mesh,
        spec.model.alpha0(),
        &conv,
        T::one(),
        T::zero(),
        source,
        u0_nodal,
    )
}

/// Marches the generalized memory-kernel scheme.
pub fn march_general<T: Real>(spec: &GeneralMemorySpec<T>) -> Result<SolutionHistory<T>> {
    spec.validate()?;
    let ops = SpatialOperators::build(&spec.grid)?;
    let conv = general_weight_table(&spec.mesh, &spec.kernel)?;
    let u0_nodal = interpolate_nodal(&spec.grid, |x| (spec.u0)(x));
    let coords = node_coords(&spec.grid);
    let f = spec.f.clone();
    let dim = spec.grid.dim();
    let source = move |_n: usize, t_n: T, out: &mut [T]| {
        for (c, o) in coords.iter().zip(out.iter_mut()) {
            *o = f(&c[..dim], t_n);
        }
    };
    time_march(
        &spec.grid,
        &ops,
        &spec.mesh,
        spec.alpha0,
        &conv,
        spec.w1,
        spec.w2,
        source,
        u0_nodal,
    )
}

/// Quadrature weights of the generalized kernel on every history interval.
pub fn general_weight_table<T: Real>(
    mesh: &GradedMesh<T>,
    kernel: &MemoryKernel<T>,
) -> Result<ConvWeightTable<T>> {
    let rule = GaussLegendre::new(32)?;
    let n_steps = mesh.n_steps();
    let rows: Vec<ConvWeightRow<T>> = (1..=n_steps)
        .into_par_iter()
        .map(|n| {
            let t_n = mesh.level(n);
            let weights = (1..=n)
                .map(|j| kernel.integrate(&rule, t_n - mesh.level(j), t_n - mesh.level(j - 1)))
                .collect();
            ConvWeightRow { n, weights }
        })
        .collect();
    Ok(ConvWeightTable::from_rows(rows))
}

fn node_coords<T: Real>(grid: &SpatialGrid<T>) -> Vec<[T; 2]> {
    (0..grid.n_interior()).map(|i| grid.node_coords(i)).collect()
}

#[allow(clippy::too_many_arguments)]
fn time_march<T: Real>(
    grid: &SpatialGrid<T>,
    ops: &SpatialOperators<T>,
    mesh: &GradedMesh<T>,
    alpha0: T,
    conv: &ConvWeightTable<T>,
    w_mass: T,
    w_stiff: T,
    source: impl Fn(usize, T, &mut [T]),
    u0_nodal: Vec<T>,
) -> Result<SolutionHistory<T>> {
    let n_steps = mesh.n_steps();
    let m = grid.n_interior();
    let mut states: Vec<Vec<T>> = Vec::with_capacity(n_steps + 1);
    states.push(u0_nodal);
    let needs_stiff_memory = w_stiff != T::zero();
    let mut src = vec![T::zero(); m];

    for n in 1..=n_steps {
        let a_row = L1WeightRow::compute(mesh, alpha0, n)?;
        let om = conv.row(n);
        let theta = implicit_share::<T>(n);
        let c_mass = a_row.diagonal() + theta * om.omega(n) * w_mass;
        let c_stiff = T::one() - theta * om.omega(n) * w_stiff;
        if c_mass <= T::zero() {
            return Err(Error::Numerical(format!(
                "implicit mass coefficient {c_mass} is not positive at step {n}"
            )));
        }
        if c_stiff <= T::zero() {
            return Err(Error::Numerical(format!(
                "implicit stiffness coefficient {c_stiff} is not positive at step {n}"
            )));
        }

        // coefficient on U^k inside the mass part of the right-hand side:
        // rearranged L1 history minus w1 times the explicit memory weights
        let mut coef = vec![T::zero(); n];
        coef[0] = a_row.a(n - 1);
        for k in 1..n {
            coef[k] = a_row.a(n - k - 1) - a_row.a(n - k);
        }
        let mut mem_coef = vec![T::zero(); n];
        if n >= 2 {
            let half = T::of(0.5);
            for k in 1..n {
                let own = if k == 1 { om.omega(1) } else { half * om.omega(k) };
                mem_coef[k] = own + half * om.omega(k + 1);
                coef[k] -= w_mass * mem_coef[k];
            }
        }

        source(n, mesh.level(n), &mut src);
        let mut acc = src.clone();
        accumulate_history(&states, &coef, &mut acc);
        let mut rhs = ops.apply_mass(&acc);
        if needs_stiff_memory && n >= 2 {
            let mut mem = vec![T::zero(); m];
            accumulate_history(&states, &mem_coef, &mut mem);
            let s_mem = ops.apply_stiffness(&mem);
            for (r, s) in rhs.iter_mut().zip(&s_mem) {
                *r += w_stiff * *s;
            }
        }

        let u = ops.solve_system(c_mass, c_stiff, &rhs)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite solution at step {n}")));
        }
        states.push(u);
    }

    Ok(SolutionHistory { grid: *grid, mesh: mesh.clone(), states })
}

/// acc[i] += sum_k coef[k] * states[k][i]; chunked across the spatial index
/// when the sum is large enough to be worth distributing.
fn accumulate_history<T: Real>(states: &[Vec<T>], coef: &[T], acc: &mut [T]) {
    let m = acc.len();
    let work = m.saturating_mul(coef.len());
    if work < 1 << 15 {
        for (k, &c) in coef.iter().enumerate() {
            if c != T::zero() {
                for (a, &s) in acc.iter_mut().zip(&states[k]) {
                    *a += c * s;
                }
            }
        }
    } else {
        let chunk = 1024.max(m / (rayon::current_num_threads() * 4).max(1));
        acc.par_chunks_mut(chunk).enumerate().for_each(|(ci, out)| {
            let lo = ci * chunk;
            let hi = lo + out.len();
            for (k, &c) in coef.iter().enumerate() {
                if c != T::zero() {
                    for (a, &s) in out.iter_mut().zip(&states[k][lo..hi]) {
                        *a += c * s;
                    }
                }
            }
        });
    }
}

/// Worst mass-weighted residual of the discrete equation over all steps,
/// assembled directly from the quadrature formulas rather than from the
/// implicit/explicit split used while marching.
pub fn scheme_residual<T: Real>(spec: &ProblemSpec<T>, history: &SolutionHistory<T>) -> Result<T> {
    let ops = SpatialOperators::build(&spec.grid)?;
    let gtilde = Gtilde::new(spec.model.clone());
    let conv = ConvWeightTable::build(&spec.mesh, &gtilde)?;
    let alpha0 = spec.model.alpha0();
    let m = spec.grid.n_interior();
    let coords = node_coords(&spec.grid);
    let u0_nodal = interpolate_nodal(&spec.grid, |x| (spec.u0)(x));
    let half = T::of(0.5);
    let mut worst = T::zero();
    for n in 1..=spec.mesh.n_steps() {
        let a_row = L1WeightRow::compute(&spec.mesh, alpha0, n)?;
        let om = conv.row(n);
        let mut inner = vec![T::zero(); m];
        // D_N U^n = sum_k a_{n-k} (U^k - U^{k-1})
        for k in 1..=n {
            let a = a_row.a(n - k);
            for i in 0..m {
                inner[i] += a * (history.states[k][i] - history.states[k - 1][i]);
            }
        }
        // memory quadrature: omega_{n,1} U^1 + sum_{j>=2} omega_{n,j} U^{j-1/2}
        for i in 0..m {
            inner[i] += om.omega(1) * history.states[1][i];
        }
        for j in 2..=n {
            let w = half * om.omega(j);
            for i in 0..m {
                inner[i] += w * (history.states[j - 1][i] + history.states[j][i]);
            }
        }
        // minus the shifted source
        let t_n = spec.mesh.level(n);
        let g_n = conv.g_at_level(n);
        for i in 0..m {
            inner[i] -= (spec.f)(&coords[i][..spec.grid.dim()], t_n) + g_n * u0_nodal[i];
        }
        let mut r = ops.apply_mass(&inner);
        let su = ops.apply_stiffness(&history.states[n]);
        for (ri, si) in r.iter_mut().zip(&su) {
            *ri += *si;
        }
        // mass-weighted norm sqrt(r^T M^{-1} r)
        let z = ops.solve_system(T::one(), T::zero(), &r)?;
        let norm = r.iter().zip(&z).map(|(&a, &b)| a * b).fold(T::zero(), |s, v| s + v);
        worst = worst.max(norm.max(T::zero()).sqrt());
    }
    let _ = norm2::<T>(&[]); // keep helper linked for doc builds
    Ok(worst)
}
