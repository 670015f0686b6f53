//! Periodic square grid, grid functions and the second-order difference
//! operators used by the spatial discretization.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};

/// `M x M` periodic grid on `[0, L)^2` with spacing `h = L / M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    m: usize,
    length: f64,
}

impl Grid2D {
    pub fn new(m: usize, length: f64) -> Result<Self> {
        if m < 4 {
            return Err(domain(format!("grid needs at least 4 points per side, got {m}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(domain(format!("domain length must be positive, got {length}")));
        }
        Ok(Self { m, length })
    }

    /// Grid on `(0, 2 pi)^2`.
    pub fn periodic_2pi(m: usize) -> Result<Self> {
        Self::new(m, 2.0 * PI)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.m as f64
    }

    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn zeros(&self) -> Field {
        self.constant(0.0)
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            grid: *self,
            values: vec![c; self.len()],
        }
    }

    /// Samples `f(x, y)` at the grid points; row `i` holds `y = i h`.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(self.len());
        for i in 0..self.m {
            let y = self.coord(i);
            for j in 0..self.m {
                values.push(f(self.coord(j), y));
            }
        }
        Field { grid: *self, values }
    }

    /// Eigenvalue of `-Delta_h` for the 1D wavenumber index `p`:
    /// `(4/h^2) sin^2(pi p / M)`.
    pub fn eigenvalue_1d(&self, p: usize) -> f64 {
        let h = self.h();
        let s = (PI * p as f64 / self.m as f64).sin();
        4.0 * s * s / (h * h)
    }
}

impl fmt::Display for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} on L={}", self.m, self.m, self.length)
    }
}

/// Norms supported by [`Field::norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    L2,
    L4,
    L6,
    Inf,
}

impl LpNorm {
    pub fn from_p(p: f64) -> Result<Self> {
        match p {
            p if p == 2.0 => Ok(Self::L2),
            p if p == 4.0 => Ok(Self::L4),
            p if p == 6.0 => Ok(Self::L6),
            p if p == f64::INFINITY => Ok(Self::Inf),
            _ => Err(domain(format!("unsupported norm exponent {p}"))),
        }
    }
}

/// Grid function, stored row-major with row index `i` for `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("field entries must be finite, found {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.m + j]
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: other.grid.to_string(),
            });
        }
        Ok(())
    }

    /// Discrete inner product `h^2 sum v w`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let h = self.grid.h();
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(h * h * s)
    }

    /// Discrete `l^p` norm `(h^2 sum |v|^p)^(1/p)`; max norm for `Inf`.
    pub fn norm(&self, p: LpNorm) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        match p {
            LpNorm::L2 => (h2 * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            LpNorm::L4 => (h2 * self.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>()).powf(0.25),
            LpNorm::L6 => {
                let s: f64 = self.values.iter().map(|v| { let v2 = v * v; v2 * v2 * v2 }).sum();
                (h2 * s).powf(1.0 / 6.0)
            }
            LpNorm::Inf => self.max_abs(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        h2 * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Five-point periodic Laplacian.
    pub fn laplacian(&self) -> Field {
        let m = self.grid.m;
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        let v = &self.values;
        let mut out = vec![0.0; v.len()];
        for i in 0..m {
            let up = if i + 1 == m { 0 } else { i + 1 };
            let down = if i == 0 { m - 1 } else { i - 1 };
            for j in 0..m {
                let right = if j + 1 == m { 0 } else { j + 1 };
                let left = if j == 0 { m - 1 } else { j - 1 };
                let c = v[i * m + j];
                out[i * m + j] = (v[i * m + right] + v[i * m + left] + v[up * m + j]
                    + v[down * m + j]
                    - 4.0 * c)
                    * inv_h2;
            }
        }
        Field {
            grid: self.grid,
            values: out,
        }
    }

    /// `||grad_h v||^2` with forward differences, so that
    /// `<-Delta_h v, v> = ||grad_h v||^2` holds exactly up to rounding.
    pub fn grad_norm_sq(&self) -> f64 {
        let m = self.grid.m;
        let v = &self.values;
        let mut s = 0.0;
        for i in 0..m {
            let up = if i + 1 == m { 0 } else { i + 1 };
            for j in 0..m {
                let right = if j + 1 == m { 0 } else { j + 1 };
                let c = v[i * m + j];
                let dx = v[i * m + right] - c;
                let dy = v[up * m + j] - c;
                s += dx * dx + dy * dy;
            }
        }
        // h^2 * sum (d/h)^2
        s
    }

    /// `<grad_h v, grad_h w>` with the same forward differences.
    pub fn grad_inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let m = self.grid.m;
        let (v, w) = (&self.values, &other.values);
        let mut s = 0.0;
        for i in 0..m {
            let up = if i + 1 == m { 0 } else { i + 1 };
            for j in 0..m {
                let right = if j + 1 == m { 0 } else { j + 1 };
                let c = i * m + j;
                s += (v[i * m + right] - v[c]) * (w[i * m + right] - w[c])
                    + (v[up * m + j] - v[c]) * (w[up * m + j] - w[c]);
            }
        }
        Ok(s)
    }

    /// `self + s * other` in place.
    pub fn axpy(&mut self, s: f64, other: &Field) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Spectral solver for `a0 u - c Delta_h u = rhs` on a periodic grid.
///
/// The five-point Laplacian is diagonal in the discrete Fourier basis with
/// eigenvalues `-(lambda_p + lambda_q)`, so each mode is divided by
/// `a0 + c (lambda_p + lambda_q)`.
pub struct HelmholtzSolver {
    grid: Grid2D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
    buf: Vec<Complex64>,
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for HelmholtzSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HelmholtzSolver").field("grid", &self.grid).finish()
    }
}

impl Clone for HelmholtzSolver {
    fn clone(&self) -> Self {
        Self::new(self.grid)
    }
}

impl HelmholtzSolver {
    pub fn new(grid: Grid2D) -> Self {
        let m = grid.m();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            eig: (0..m).map(|p| grid.eigenvalue_1d(p)).collect(),
            buf: vec![Complex64::new(0.0, 0.0); grid.len()],
            tmp: vec![Complex64::new(0.0, 0.0); grid.len()],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn transpose(&mut self) {
        let m = self.grid.m();
        for i in 0..m {
            for j in 0..m {
                self.tmp[j * m + i] = self.buf[i * m + j];
            }
        }
        std::mem::swap(&mut self.buf, &mut self.tmp);
    }

    /// Solves `a0 u - c Delta_h u = rhs`, writing `u` into `out`.
    pub fn solve_into(&mut self, a0: f64, c: f64, rhs: &Field, out: &mut Field) -> Result<()> {
        if rhs.grid != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: rhs.grid.to_string(),
            });
        }
        if !(a0 > 0.0) {
            return Err(domain(format!("Helmholtz shift must be positive, got {a0}")));
        }
        if c == 0.0 {
            out.grid = rhs.grid;
            out.values.clear();
            out.values.extend(rhs.values.iter().map(|v| v / a0));
            return Ok(());
        }
        let m = self.grid.m();
        for (b, &v) in self.buf.iter_mut().zip(&rhs.values) {
            *b = Complex64::new(v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.transpose();
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);

        // After the transpose the row index is the x wavenumber; the symbol
        // is symmetric so the layout does not matter.
        let norm = 1.0 / (m * m) as f64;
        for p in 0..m {
            for q in 0..m {
                let d = a0 + c * (self.eig[p] + self.eig[q]);
                self.buf[p * m + q] *= norm / d;
            }
        }

        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.transpose();
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);

        out.grid = rhs.grid;
        out.values.clear();
        out.values.extend(self.buf.iter().map(|z| z.re));
        Ok(())
    }

    pub fn solve(&mut self, a0: f64, c: f64, rhs: &Field) -> Result<Field> {
        let mut out = self.grid.zeros();
        self.solve_into(a0, c, rhs, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid2D, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Field::from_values(grid, values).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid2D::new(3, 1.0).is_err());
        assert!(Grid2D::new(8, 0.0).is_err());
        assert!(Grid2D::periodic_2pi(8).is_ok());
    }

    #[test]
    fn inner_of_ones_is_area() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let one = g.constant(1.0);
        assert_relative_eq!(one.inner(&one).unwrap(), (2.0 * PI).powi(2), max_relative = 1e-13);
        assert_relative_eq!(one.inner(&one).unwrap(), 39.478, epsilon = 1e-3);
    }

    #[test]
    fn distinct_fourier_modes_are_orthogonal() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let v = g.sample(|x, y| x.sin() * (2.0 * y).cos());
        let w = g.sample(|x, y| (3.0 * x).cos() * y.sin());
        assert!(v.inner(&w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let a = Grid2D::periodic_2pi(8).unwrap().zeros();
        let b = Grid2D::periodic_2pi(16).unwrap().zeros();
        assert!(matches!(a.inner(&b), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn norms_of_constants() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        let one = g.constant(1.0);
        assert_relative_eq!(one.norm(LpNorm::L4), (2.0 * PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(one.norm(LpNorm::L4), 2.5066, epsilon = 1e-4);
        let c = g.constant(-1.7);
        let l = g.length();
        for (p, norm) in [(2.0, LpNorm::L2), (4.0, LpNorm::L4), (6.0, LpNorm::L6)] {
            assert_relative_eq!(c.norm(norm), 1.7 * l.powf(2.0 / p), max_relative = 1e-13);
        }
        assert_eq!(c.norm(LpNorm::Inf), 1.7);
        assert!(LpNorm::from_p(3.0).is_err());
        assert_eq!(LpNorm::from_p(f64::INFINITY).unwrap(), LpNorm::Inf);
    }

    #[test]
    fn l2_norm_squared_is_self_inner() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        let v = random_field(g, 3);
        assert_relative_eq!(v.norm(LpNorm::L2).powi(2), v.inner(&v).unwrap(), max_relative = 1e-14);
        assert_eq!(v.norm_sq(), v.inner(&v).unwrap());
    }

    #[test]
    fn laplacian_examples() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        assert!(g.constant(3.0).laplacian().max_abs() < 1e-12);

        let v = g.sample(|x, _| x.sin());
        let h = g.h();
        let lam = 4.0 * (h / 2.0).sin().powi(2) / (h * h);
        let lv = v.laplacian();
        for (a, b) in lv.values().iter().zip(v.values()) {
            assert!((a + lam * b).abs() < 1e-12);
        }

        let mut spike = g.zeros();
        spike.values_mut()[0] = 1.0;
        let ls = spike.laplacian();
        let m = g.m();
        let ih2 = 1.0 / (h * h);
        assert_relative_eq!(ls.at(0, 0), -4.0 * ih2);
        assert_relative_eq!(ls.at(0, 1), ih2);
        assert_relative_eq!(ls.at(0, m - 1), ih2);
        assert_relative_eq!(ls.at(1, 0), ih2);
        assert_relative_eq!(ls.at(m - 1, 0), ih2);
        assert_eq!(ls.at(2, 2), 0.0);
    }

    #[test]
    fn green_formula_for_random_pairs() {
        let g = Grid2D::periodic_2pi(24).unwrap();
        for seed in 0..100 {
            let v = random_field(g, seed);
            let w = random_field(g, seed + 1000);
            let lhs = -v.laplacian().inner(&w).unwrap();
            let rhs = v.grad_inner(&w).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-12);
            let gv = v.grad_norm_sq();
            assert_relative_eq!(gv, -v.laplacian().inner(&v).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn grad_norm_examples() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        assert_eq!(g.constant(0.4).grad_norm_sq(), 0.0);
        let v = g.sample(|x, _| x.sin());
        let h = g.h();
        let lam = 4.0 * (h / 2.0).sin().powi(2) / (h * h);
        assert_relative_eq!(v.grad_norm_sq(), lam * v.norm_sq(), max_relative = 1e-12);
    }

    #[test]
    fn helmholtz_without_diffusion_is_pointwise() {
        let g = Grid2D::periodic_2pi(8).unwrap();
        let rhs = random_field(g, 9);
        let mut s = HelmholtzSolver::new(g);
        let u = s.solve(2.5, 0.0, &rhs).unwrap();
        for (a, b) in u.values().iter().zip(rhs.values()) {
            assert_eq!(*a, b / 2.5);
        }
    }

    #[test]
    fn helmholtz_recovers_single_mode() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let (p, q) = (3usize, 5usize);
        let mode = g.sample(|x, y| (p as f64 * x).cos() * (q as f64 * y).sin());
        let lam = g.eigenvalue_1d(p) + g.eigenvalue_1d(q);
        let (a0, c) = (1.7, 0.3);
        let mut rhs = mode.clone();
        rhs.scale(a0 + c * lam);
        let u = HelmholtzSolver::new(g).solve(a0, c, &rhs).unwrap();
        for (a, b) in u.values().iter().zip(mode.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn helmholtz_residual_is_tiny() {
        for &m in &[8usize, 30, 64] {
            let g = Grid2D::periodic_2pi(m).unwrap();
            let rhs = random_field(g, m as u64);
            let (a0, c) = (0.9, 0.5);
            let u = HelmholtzSolver::new(g).solve(a0, c, &rhs).unwrap();
            let mut res = u.clone();
            res.scale(a0);
            res.axpy(-c, &u.laplacian()).unwrap();
            let res = res.sub(&rhs).unwrap();
            assert!(res.norm(LpNorm::L2) / rhs.norm(LpNorm::L2) < 1e-13);
        }
    }

    #[test]
    fn helmholtz_inverts_operator() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        let v = random_field(g, 5);
        let (a0, c) = (3.0, 0.25);
        let mut rhs = v.clone();
        rhs.scale(a0);
        rhs.axpy(-c, &v.laplacian()).unwrap();
        let u = HelmholtzSolver::new(g).solve(a0, c, &rhs).unwrap();
        assert!(u.sub(&v).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn helmholtz_rejects_nonpositive_shift() {
        let g = Grid2D::periodic_2pi(8).unwrap();
        assert!(HelmholtzSolver::new(g).solve(0.0, 1.0, &g.zeros()).is_err());
    }
}
