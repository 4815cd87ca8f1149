//! Spatial Galerkin discretization on (0,1)^d, d = 1 or 2: uniform grids,
//! mass/stiffness operators in tridiagonal / Kronecker form, and the per-step
//! linear solves.
//!
//! 1D uses piecewise-linear elements: mass (h/6) tridiag(1,4,1) and stiffness
//! (1/h) tridiag(-1,2,-1) on interior nodes. 2D uses the tensor products
//! M (x) M and S (x) M + M (x) S of the 1D factors (bilinear elements on
//! squares), solved by diagonalization in the shared sine eigenbasis.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid with homogeneous Dirichlet boundary; only interior nodes
/// carry unknowns. 2D nodes are numbered x-fastest:
/// `idx = (iy-1)(J-1) + (ix-1)` for the node (ix h, iy h).
#[derive(Debug, Clone, Copy)]
pub struct SpatialGrid<T> {
    dim: usize,
    intervals: usize,
    width: T,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(dim: usize, intervals: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if intervals < 2 {
            return Err(Error::Config(format!("need at least 2 intervals per direction, got {intervals}")));
        }
        Ok(Self { dim, intervals, width: T::one() / T::from_index(intervals) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Intervals per direction J; h = 1/J.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn width(&self) -> T {
        self.width
    }

    /// Interior nodes per direction, J - 1.
    pub fn nodes_per_dim(&self) -> usize {
        self.intervals - 1
    }

    /// Total interior unknowns (J-1)^d.
    pub fn n_interior(&self) -> usize {
        self.nodes_per_dim().pow(self.dim as u32)
    }

    /// Coordinates of interior node `idx`; the second entry is unused in 1D.
    pub fn node_coords(&self, idx: usize) -> [T; 2] {
        let p = self.nodes_per_dim();
        match self.dim {
            1 => [T::from_index(idx + 1) * self.width, T::zero()],
            _ => {
                let ix = idx % p;
                let iy = idx / p;
                [T::from_index(ix + 1) * self.width, T::from_index(iy + 1) * self.width]
            }
        }
    }
}

/// Values of `f` at the interior nodes (boundary values are implicitly zero).
pub fn interpolate_nodal<T: Real, F>(grid: &SpatialGrid<T>, f: F) -> Vec<T>
where
    F: Fn(&[T]) -> T,
{
    (0..grid.n_interior())
        .map(|idx| {
            let c = grid.node_coords(idx);
            f(&c[..grid.dim()])
        })
        .collect()
}

/// Symmetric tridiagonal operator.
#[derive(Debug, Clone)]
pub struct SymTridiag<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Real> SymTridiag<T> {
    fn constant(m: usize, diag: T, off: T) -> Self {
        Self { diag: vec![diag; m], off: vec![off; m.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, v: &[T], out: &mut [T]) {
        let m = self.len();
        for i in 0..m {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < m {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
    }

    /// Thomas elimination; the combined operators here are strictly
    /// diagonally dominant, so no pivoting is needed.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let m = self.len();
        let mut c = vec![T::zero(); m];
        let mut d = vec![T::zero(); m];
        c[0] = if m > 1 { self.off[0] / self.diag[0] } else { T::zero() };
        d[0] = rhs[0] / self.diag[0];
        for i in 1..m {
            let denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            if i + 1 < m {
                c[i] = self.off[i] / denom;
            }
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..m - 1).rev() {
            let next = d[i + 1];
            d[i] = d[i] - c[i] * next;
        }
        d
    }
}

/// Shared sine eigenbasis of the 1D pencil (S, M): S v_k = lambda_k M v_k
/// with V^T M V = I, used for the Kronecker solve in 2D.
#[derive(Debug, Clone)]
struct SineBasis<T> {
    vecs: Array2<T>,
    lambda: Vec<T>,
}

impl<T: Real> SineBasis<T> {
    fn new(intervals: usize, width: T) -> Self {
        let p = intervals - 1;
        let j_t = T::from_index(intervals);
        let pi = T::of(std::f64::consts::PI);
        let six = T::of(6.0);
        let two = T::of(2.0);
        let mut vecs = Array2::zeros((p, p));
        let mut lambda = Vec::with_capacity(p);
        for k in 0..p {
            let angle = T::from_index(k + 1) * pi / j_t;
            let mass_eig = width * (T::of(4.0) + two * angle.cos()) / six;
            let stiff_eig = (two - two * angle.cos()) / width;
            lambda.push(stiff_eig / mass_eig);
            // ||sin column||^2 = J/2, so this scaling makes V M-orthonormal
            let norm = T::one() / (mass_eig * j_t / two).sqrt();
            for i in 0..p {
                vecs[(i, k)] = (T::from_index((i + 1) * (k + 1)) * pi / j_t).sin() * norm;
            }
        }
        Self { vecs, lambda }
    }

    /// Solves (c1 M2 + c2 S2) u = rhs by transforming to the eigenbasis.
    fn solve(&self, c1: T, c2: T, rhs: &[T]) -> Vec<T> {
        let p = self.lambda.len();
        let r = ArrayView2::from_shape((p, p), rhs).expect("rhs length (J-1)^2");
        let mut hat = self.vecs.t().dot(&r).dot(&self.vecs);
        for k in 0..p {
            for l in 0..p {
                hat[(k, l)] = hat[(k, l)] / (c1 + c2 * (self.lambda[k] + self.lambda[l]));
            }
        }
        let u = self.vecs.dot(&hat).dot(&self.vecs.t());
        u.into_raw_vec()
    }
}

/// Assembled mass and stiffness forms with the per-step solve.
pub struct SpatialOperators<T> {
    grid: SpatialGrid<T>,
    mass1: SymTridiag<T>,
    stiff1: SymTridiag<T>,
    basis: Option<SineBasis<T>>,
}

impl<T: Real> SpatialOperators<T> {
    pub fn build(grid: &SpatialGrid<T>) -> Result<Self> {
        let p = grid.nodes_per_dim();
        let h = grid.width();
        let six = T::of(6.0);
        let mass1 = SymTridiag::constant(p, T::of(4.0) * h / six, h / six);
        let stiff1 = SymTridiag::constant(p, T::of(2.0) / h, -T::one() / h);
        let basis = (grid.dim() == 2).then(|| SineBasis::new(grid.intervals(), h));
        Ok(Self { grid: *grid, mass1, stiff1, basis })
    }

    pub fn grid(&self) -> &SpatialGrid<T> {
        &self.grid
    }

    fn apply_along_x(op: &SymTridiag<T>, p: usize, v: &[T], out: &mut [T]) {
        for (row_in, row_out) in v.chunks_exact(p).zip(out.chunks_exact_mut(p)) {
            op.apply(row_in, row_out);
        }
    }

    fn apply_along_y(op: &SymTridiag<T>, p: usize, v: &[T], out: &mut [T]) {
        let mut col = vec![T::zero(); p];
        let mut res = vec![T::zero(); p];
        for ix in 0..p {
            for iy in 0..p {
                col[iy] = v[iy * p + ix];
            }
            op.apply(&col, &mut res);
            for iy in 0..p {
                out[iy * p + ix] = res[iy];
            }
        }
    }

    /// Gram (mass) operator applied to interior nodal values.
    pub fn apply_mass(&self, v: &[T]) -> Vec<T> {
        let p = self.grid.nodes_per_dim();
        let mut out = vec![T::zero(); v.len()];
        match self.grid.dim() {
            1 => self.mass1.apply(v, &mut out),
            _ => {
                let mut tmp = vec![T::zero(); v.len()];
                Self::apply_along_y(&self.mass1, p, v, &mut tmp);
                Self::apply_along_x(&self.mass1, p, &tmp, &mut out);
            }
        }
        out
    }

    /// Dirichlet form (stiffness) applied to interior nodal values.
    pub fn apply_stiffness(&self, v: &[T]) -> Vec<T> {
        let p = self.grid.nodes_per_dim();
        let mut out = vec![T::zero(); v.len()];
        match self.grid.dim() {
            1 => self.stiff1.apply(v, &mut out),
            _ => {
                let mut tmp = vec![T::zero(); v.len()];
                let mut tmp2 = vec![T::zero(); v.len()];
                Self::apply_along_y(&self.mass1, p, v, &mut tmp);
                Self::apply_along_x(&self.stiff1, p, &tmp, &mut out);
                Self::apply_along_y(&self.stiff1, p, v, &mut tmp);
                Self::apply_along_x(&self.mass1, p, &tmp, &mut tmp2);
                for (o, t) in out.iter_mut().zip(&tmp2) {
                    *o += *t;
                }
            }
        }
        out
    }

    /// Generalized eigenvalues of the pencil (S, M); the smallest bounds the
    /// discrete Poincare constant.
    pub fn generalized_eigenvalues(&self) -> Vec<T> {
        let p = self.grid.nodes_per_dim();
        let basis = SineBasis::new(self.grid.intervals(), self.grid.width());
        match self.grid.dim() {
            1 => basis.lambda,
            _ => {
                let mut eigs = Vec::with_capacity(p * p);
                for k in 0..p {
                    for l in 0..p {
                        eigs.push(basis.lambda[k] + basis.lambda[l]);
                    }
                }
                eigs
            }
        }
    }

    /// Solves (c1 M + c2 S) v = rhs to relative residual <= 1e-12.
    ///
    /// 1D: direct banded elimination. 2D: diagonalization in the sine basis
    /// with one step of iterative refinement if the verified residual asks
    /// for it.
    pub fn solve_system(&self, c1: T, c2: T, rhs: &[T]) -> Result<Vec<T>> {
        if c1 <= T::zero() {
            return Err(Error::Config(format!("mass coefficient must be positive, got {c1}")));
        }
        if c2 < T::zero() {
            return Err(Error::Config(format!("stiffness coefficient must be nonnegative, got {c2}")));
        }
        if rhs.len() != self.grid.n_interior() {
            return Err(Error::Config(format!(
                "rhs length {} does not match {} interior nodes",
                rhs.len(),
                self.grid.n_interior()
            )));
        }
        let mut x = self.solve_once(c1, c2, rhs);
        let mut residual = self.residual(c1, c2, &x, rhs);
        let rhs_norm = norm2(rhs);
        let tol = T::of(1e-12);
        if norm2(&residual) > T::of(0.25) * tol * rhs_norm {
            // one refinement pass recovers the last digits if the transform
            // rounding accumulated
            let correction = self.solve_once(c1, c2, &residual);
            for (xi, ci) in x.iter_mut().zip(&correction) {
                *xi += *ci;
            }
            residual = self.residual(c1, c2, &x, rhs);
        }
        let rel = if rhs_norm > T::zero() { norm2(&residual) / rhs_norm } else { norm2(&residual) };
        if rel > tol {
            return Err(Error::Numerical(format!(
                "linear solve stalled at relative residual {rel} (target 1e-12)"
            )));
        }
        Ok(x)
    }

    fn solve_once(&self, c1: T, c2: T, rhs: &[T]) -> Vec<T> {
        match self.grid.dim() {
            1 => {
                let m = self.grid.n_interior();
                let mut combined = SymTridiag {
                    diag: Vec::with_capacity(m),
                    off: Vec::with_capacity(m.saturating_sub(1)),
                };
                for i in 0..m {
                    combined.diag.push(c1 * self.mass1.diag[i] + c2 * self.stiff1.diag[i]);
                }
                for i in 0..m.saturating_sub(1) {
                    combined.off.push(c1 * self.mass1.off[i] + c2 * self.stiff1.off[i]);
                }
                combined.solve(rhs)
            }
            _ => self.basis.as_ref().expect("2D operators carry a basis").solve(c1, c2, rhs),
        }
    }

    fn residual(&self, c1: T, c2: T, x: &[T], rhs: &[T]) -> Vec<T> {
        let mx = self.apply_mass(x);
        let sx = self.apply_stiffness(x);
        mx.iter()
            .zip(&sx)
            .zip(rhs)
            .map(|((&m, &s), &b)| b - (c1 * m + c2 * s))
            .collect()
    }
}

pub(crate) fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).fold(T::zero(), |a, b| a + b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const PI: f64 = std::f64::consts::PI;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn single_interior_node_operators() {
        let grid = SpatialGrid::new(1, 2usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        assert!((ops.apply_mass(&[1.0])[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((ops.apply_stiffness(&[1.0])[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_annihilates_constants_in_the_interior() {
        let grid = SpatialGrid::new(1, 4usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let s_ones = ops.apply_stiffness(&[1.0, 1.0, 1.0]);
        assert!((s_ones[0] - 4.0).abs() < 1e-13);
        assert!(s_ones[1].abs() < 1e-13);
        assert!((s_ones[2] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn mass_interior_row_sums_equal_h() {
        let grid = SpatialGrid::new(1, 8usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let ones = vec![1.0; 7];
        let m_ones = ops.apply_mass(&ones);
        for row in m_ones.iter().take(6).skip(1) {
            assert!((row - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn operators_are_symmetric_and_mass_is_positive() {
        let mut rng = StdRng::seed_from_u64(7);
        for (dim, j) in [(1usize, 9usize), (2, 5)] {
            let grid = SpatialGrid::new(dim, j).unwrap();
            let ops = SpatialOperators::<f64>::build(&grid).unwrap();
            let m = grid.n_interior();
            for _ in 0..5 {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mv = ops.apply_mass(&v);
                let mw = ops.apply_mass(&w);
                assert!((dot(&mv, &w) - dot(&v, &mw)).abs() < 1e-14);
                let sv = ops.apply_stiffness(&v);
                let sw = ops.apply_stiffness(&w);
                assert!((dot(&sv, &w) - dot(&v, &sw)).abs() < 1e-13);
                assert!(dot(&mv, &v) > 0.0);
            }
        }
    }

    #[test]
    fn rayleigh_quotient_near_first_laplace_eigenvalue_2d() {
        let grid = SpatialGrid::new(2, 4usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let v = interpolate_nodal(&grid, |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin());
        let sv = ops.apply_stiffness(&v);
        let mv = ops.apply_mass(&v);
        let rayleigh = dot(&sv, &v) / dot(&mv, &v);
        let target = 2.0 * PI * PI;
        assert!((rayleigh - target).abs() < 0.05 * target, "{rayleigh}");
    }

    #[test]
    fn smallest_eigenvalue_dominates_continuum_value() {
        for (dim, j) in [(1usize, 8usize), (1, 32), (2, 8), (2, 16)] {
            let grid = SpatialGrid::new(dim, j).unwrap();
            let ops = SpatialOperators::<f64>::build(&grid).unwrap();
            let h = 1.0 / j as f64;
            let min = ops
                .generalized_eigenvalues()
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let target = PI * PI * dim as f64 * (1.0 - 4.0 * h * h);
            assert!(min >= target, "dim={dim} J={j}: {min} < {target}");
            assert!(min > 0.0);
        }
    }

    #[test]
    fn stiffness_is_exact_for_quadratic_interpolants_1d() {
        // v = x(1-x): nodal interpolant, <S v, v> must equal the exact
        // piecewise-linear Dirichlet energy of the interpolant.
        let j = 8usize;
        let grid = SpatialGrid::new(1, j).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let v = interpolate_nodal(&grid, |x: &[f64]| x[0] * (1.0 - x[0]));
        let sv = ops.apply_stiffness(&v);
        // exact integral of (w')^2 for the interpolant (sum of slopes^2 * h)
        let h = 1.0 / j as f64;
        let mut nodes = vec![0.0];
        nodes.extend(v.iter().copied());
        nodes.push(0.0);
        let exact: f64 = nodes.windows(2).map(|w| (w[1] - w[0]).powi(2) / h).sum();
        assert!((dot(&sv, &v) - exact).abs() < 1e-14);
    }

    #[test]
    fn solve_identity_and_zero() {
        let mut rng = StdRng::seed_from_u64(11);
        for (dim, j) in [(1usize, 8usize), (2, 6)] {
            let grid = SpatialGrid::new(dim, j).unwrap();
            let ops = SpatialOperators::<f64>::build(&grid).unwrap();
            let m = grid.n_interior();
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = ops.solve_system(1.0, 0.0, &ops.apply_mass(&w)).unwrap();
            for (g, e) in got.iter().zip(&w) {
                assert!((g - e).abs() < 1e-12);
            }
            let zero = ops.solve_system(2.0, 1.0, &vec![0.0; m]).unwrap();
            assert!(zero.iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn solve_matches_dense_elimination_1d() {
        let grid = SpatialGrid::new(1, 4usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let rhs = [1.0, 1.0, 1.0];
        let x = ops.solve_system(1.0, 1.0, &rhs).unwrap();
        // dense Gaussian elimination on the 3x3 system
        let h = 0.25;
        let d = 4.0 * h / 6.0 + 2.0 / h;
        let o = h / 6.0 - 1.0 / h;
        let mut a = [[d, o, 0.0, 1.0], [o, d, o, 1.0], [0.0, o, d, 1.0]];
        for i in 0..3 {
            for r in (i + 1)..3 {
                let f = a[r][i] / a[i][i];
                for c in i..4 {
                    a[r][c] -= f * a[i][c];
                }
            }
        }
        let mut expect = [0.0; 3];
        for i in (0..3).rev() {
            let mut s = a[i][3];
            for c in (i + 1)..3 {
                s -= a[i][c] * expect[c];
            }
            expect[i] = s / a[i][i];
        }
        for (g, e) in x.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-13, "{g} vs {e}");
        }
    }

    #[test]
    fn solve_residual_verification_2d() {
        let mut rng = StdRng::seed_from_u64(3);
        let grid = SpatialGrid::new(2, 16usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        let m = grid.n_interior();
        let rhs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = ops.solve_system(3.7, 1.0, &rhs).unwrap();
        let mx = ops.apply_mass(&x);
        let sx = ops.apply_stiffness(&x);
        let mut worst = 0.0f64;
        for i in 0..m {
            worst = worst.max((3.7 * mx[i] + sx[i] - rhs[i]).abs());
        }
        assert!(worst < 1e-12 * norm2(&rhs), "residual {worst}");
    }

    #[test]
    fn interpolation_cases() {
        let grid = SpatialGrid::new(1, 4usize).unwrap();
        assert!(interpolate_nodal(&grid, |_: &[f64]| 0.0).iter().all(|&v| v == 0.0));
        let v = interpolate_nodal(&grid, |x: &[f64]| (PI * x[0]).sin());
        let expect = [(0.25 * PI).sin(), 1.0, (0.75 * PI).sin()];
        for (g, e) in v.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-15);
        }
        let grid2 = SpatialGrid::new(2, 2usize).unwrap();
        let v2 = interpolate_nodal(&grid2, |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin());
        assert_eq!(v2.len(), 1);
        assert!((v2[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        assert!(SpatialGrid::<f64>::new(3, 4).is_err());
        assert!(SpatialGrid::<f64>::new(1, 1).is_err());
        let grid = SpatialGrid::new(1, 4usize).unwrap();
        let ops = SpatialOperators::<f64>::build(&grid).unwrap();
        assert!(ops.solve_system(0.0, 1.0, &[1.0, 1.0, 1.0]).is_err());
        assert!(ops.solve_system(1.0, -1.0, &[1.0, 1.0, 1.0]).is_err());
        assert!(ops.solve_system(1.0, 1.0, &[1.0]).is_err());
    }
}
