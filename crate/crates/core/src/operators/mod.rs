//! Heterogeneous and homogenized operators on a periodic window `[-L, L)` standing in for the line.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::coefficients::Epsilon;
use crate::error::{Error, Result};
use crate::spectral::{self, PeriodicField};

pub mod nonlocal;
mod part1;
mod part2;

pub use part1::*;
pub use part2::*;

/// Minimum number of grid points per fast cell.
pub const MIN_POINTS_PER_CELL: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineGrid {
    half_width: f64,
    n: usize,
}

impl LineGrid {
    /// `n` even, `2L` a positive integer.
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        let period = 2.0 * half_width;
        if !(half_width > 0.0) || (period - period.round()).abs() > 1e-12 || period.round() < 1.0 {
            return Err(Error::Grid(format!("window length 2L = {period} must be a positive integer")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Grid(format!("line grid needs an even point count >= 8, got {n}")));
        }
        Ok(Self { half_width, n })
    }

    /// Grid with exactly `per_cell` points in each cell of size `eps`.
    pub fn with_cells(half_width: f64, eps: Epsilon, per_cell: usize) -> Result<Self> {
        let cells = 2.0 * half_width * eps.reciprocal() as f64;
        Self::new(half_width, (cells.round() as usize) * per_cell)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.period() / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Number of fast cells in the window.
    pub fn cells(&self, eps: Epsilon) -> f64 {
        self.period() * eps.reciprocal() as f64
    }

    pub fn points_per_cell(&self, eps: Epsilon) -> f64 {
        self.n as f64 / self.cells(eps)
    }

    /// Window must tile into whole cells with at least [`MIN_POINTS_PER_CELL`] points each.
    pub fn check_resolves(&self, eps: Epsilon) -> Result<()> {
        let cells = self.cells(eps);
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::Resolution(format!(
                "window length {} is not a multiple of eps = 1/{}",
                self.period(),
                eps.reciprocal()
            )));
        }
        let per = self.points_per_cell(eps);
        if per < MIN_POINTS_PER_CELL {
            return Err(Error::Resolution(format!(
                "{per} points per cell at eps = 1/{}, need {MIN_POINTS_PER_CELL}",
                eps.reciprocal()
            )));
        }
        Ok(())
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|j| f(self.point(j))).collect()
    }

    /// `x ↦ field(x/ε)`. Grids whose points per cell match the torus grid read the samples
    /// directly; otherwise the trigonometric interpolant is used.
    pub fn sample_cell_field(&self, field: &PeriodicField, eps: Epsilon) -> Vec<f64> {
        let k = eps.reciprocal() as f64;
        let per = self.points_per_cell(eps);
        let start = -self.half_width * k;
        let aligned = (per - field.n() as f64).abs() < 1e-12 && (start - start.round()).abs() < 1e-9;
        if aligned {
            let n = field.n();
            let v = field.values();
            return (0..self.n).map(|j| v[j % n]).collect();
        }
        let ys: Vec<f64> = self.points().iter().map(|x| (x * k).rem_euclid(1.0)).collect();
        field.evaluate(&ys)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.dx() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm_l2(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn integral(&self, u: &[f64]) -> f64 {
        self.dx() * u.iter().sum::<f64>()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        spectral::angular_wavenumbers(self.n, self.period())
    }

    pub fn apply_multiplier(&self, u: &[f64], m: impl Fn(f64) -> Complex64) -> Vec<f64> {
        spectral::apply_multiplier(u, self.period(), m)
    }

    /// Multiply coefficient `k` by the real table entry `table[k]`.
    pub fn apply_real_table(&self, u: &[f64], table: &[f64]) -> Vec<f64> {
        let mut c = spectral::forward(u);
        c.iter_mut().zip(table).for_each(|(c, t)| *c *= t);
        spectral::inverse(&c)
    }

    pub fn derivative(&self, u: &[f64], order: u32) -> Vec<f64> {
        self.apply_multiplier(u, spectral::derivative_symbol(order))
    }

    pub fn fractional_laplacian(&self, u: &[f64], alpha: f64) -> Vec<f64> {
        self.apply_multiplier(u, spectral::fractional_symbol(alpha))
    }

    /// Random real field whose Fourier content is confined to `|k| ≤ max_mode` (line modes),
    /// with independent standard normal coefficients.
    pub fn random_band_limited(&self, max_mode: usize, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.n;
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let top = max_mode.min(n / 2 - 1);
        c[0] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for k in 1..=top {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * 0.5;
            c[k] = z;
            c[n - k] = z.conj();
        }
        spectral::inverse(&c)
    }

    /// Gaussian bump `exp(-(x - center)² / (2 width²))`.
    pub fn gaussian_bump(&self, center: f64, width: f64) -> Vec<f64> {
        self.sample(|x| (-(x - center).powi(2) / (2.0 * width * width)).exp())
    }
}

/// Which continuous operator a [`LineOperator`] discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    HeterogeneousJumpDiffusion,
    HomogenizedJumpDiffusion,
    HeterogeneousStable,
    HomogenizedStable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorLabel {
    pub kind: OperatorKind,
    pub eps: Option<f64>,
}

/// Linear operator on line-grid fields with its exact discrete transpose.
pub trait LineOperator: Send + Sync {
    fn grid(&self) -> LineGrid;
    fn label(&self) -> OperatorLabel;
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64>;

    /// Dense matrix, column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.grid().n();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

pub(crate) fn zip3(a: &[f64], b: &[f64], c: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| f(*x, *y, *z)).collect()
}

pub(crate) fn times(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    #[test]
    fn grid_rules() {
        assert!(LineGrid::new(1.25, 64).is_err());
        assert!(LineGrid::new(1.0, 7).is_err());
        let g = LineGrid::new(1.0, 128).unwrap();
        let eps = Epsilon::from_reciprocal(4).unwrap();
        assert_eq!(g.points_per_cell(eps), 16.0);
        assert!(g.check_resolves(eps).is_ok());
        assert!(g.check_resolves(eps.halved()).is_err());
        let third = Epsilon::from_reciprocal(3).unwrap();
        assert!(LineGrid::new(1.0, 96).unwrap().check_resolves(third).is_ok());
        assert!(LineGrid::new(1.0, 90).unwrap().check_resolves(third).is_err());
    }

    #[test]
    fn aligned_and_interpolated_sampling_agree() {
        let torus = crate::spectral::TorusGrid::new(32).unwrap();
        let f = PeriodicField::from_fn(torus, |y| (2.0 * PI * y).sin() + 0.2 * (6.0 * PI * y).cos());
        let eps = Epsilon::from_reciprocal(4).unwrap();
        let aligned = LineGrid::with_cells(1.0, eps, 32).unwrap();
        let a = aligned.sample_cell_field(&f, eps);
        let direct = aligned.sample(|x| (2.0 * PI * x * 4.0).sin() + 0.2 * (6.0 * PI * x * 4.0).cos());
        assert!(a.iter().zip(&direct).all(|(x, y)| (x - y).abs() < 1e-12));
        let fine = LineGrid::with_cells(1.0, eps, 48).unwrap();
        let b = fine.sample_cell_field(&f, eps);
        let direct = fine.sample(|x| (2.0 * PI * x * 4.0).sin() + 0.2 * (6.0 * PI * x * 4.0).cos());
        assert!(b.iter().zip(&direct).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn band_limited_fields_have_no_high_modes() {
        let g = LineGrid::new(2.0, 256).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = g.random_band_limited(10, &mut rng);
        let c = spectral::forward(&u);
        for k in 11..=128 {
            assert!(c[k].norm() < 1e-14);
        }
    }
}
