//! Torus cell problems: invariant densities, correctors, effective coefficients.
//!
//! Every singular solve checks its solvability integral before solving and the residual of
//! its defining equation afterwards.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{IntegrableKernel, KernelQuadrature};
use crate::spectral::{self, PeriodicField, TorusGrid};

pub mod linalg;
mod part1;
mod part2;

pub use part1::*;
pub use part2::*;

/// Tolerance on solvability integrals, checked before each singular solve.
pub const SOLVABILITY_TOL: f64 = 1e-8;
/// Tolerance on defining-equation residuals (`L²` norm on the torus).
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Fourier tables of the kernel integrals used by the cell problems, one entry per torus mode.
///
/// `zeroth[k] = ∫c(z)cos(ω_k z)dz`, `first[k] = ∫z c(z) sin(ω_k z)dz`,
/// `second[k] = ∫z² c(z) cos(ω_k z)dz`, all against one [`KernelQuadrature`].
#[derive(Clone, Debug)]
pub struct KernelSymbols {
    pub zeroth: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub mass: f64,
    pub second_moment: f64,
}

impl KernelSymbols {
    pub fn new(kernel: &IntegrableKernel, grid: TorusGrid) -> Self {
        Self::from_quadrature(&KernelQuadrature::new(kernel), grid)
    }

    pub fn from_quadrature(quad: &KernelQuadrature, grid: TorusGrid) -> Self {
        let ws = spectral::angular_wavenumbers(grid.n(), 1.0);
        let (mut zeroth, mut first, mut second) = (vec![0.0; ws.len()], vec![0.0; ws.len()], vec![0.0; ws.len()]);
        for (k, &w) in ws.iter().enumerate() {
            for (z, c) in quad.nodes().iter().zip(quad.weights()) {
                let (s, co) = (w * z).sin_cos();
                zeroth[k] += c * co;
                first[k] += c * z * s;
                second[k] += c * z * z * co;
            }
        }
        Self { mass: zeroth[0], second_moment: second[0], zeroth, first, second }
    }

    fn table(v: &[f64], phase: Complex64) -> Vec<Complex64> {
        v.iter().map(|x| phase * x).collect()
    }

    /// `∫c(z)f(y − z)dz` (equivalently `f(y + z)`, the kernel is even).
    pub fn convolve(&self, f: &PeriodicField) -> PeriodicField {
        f.apply_table(&Self::table(&self.zeroth, Complex64::new(1.0, 0.0)))
    }

    /// `∫z c(z) f(y + z)dz`
    pub fn first_forward(&self, f: &PeriodicField) -> PeriodicField {
        f.apply_table(&Self::table(&self.first, Complex64::i()))
    }

    /// `∫z c(z) f(y − z)dz`
    pub fn first_backward(&self, f: &PeriodicField) -> PeriodicField {
        f.apply_table(&Self::table(&self.first, -Complex64::i()))
    }

    /// `∫z² c(z) f(y − z)dz`
    pub fn second_backward(&self, f: &PeriodicField) -> PeriodicField {
        f.apply_table(&Self::table(&self.second, Complex64::new(1.0, 0.0)))
    }

    /// Circulant matrix of the convolution.
    pub fn convolution_matrix(&self) -> DMatrix<f64> {
        circulant_table(&Self::table(&self.zeroth, Complex64::new(1.0, 0.0)))
    }
}

/// Circulant matrix whose action multiplies Fourier coefficient `k` by `table[k]`.
pub fn circulant_table(table: &[Complex64]) -> DMatrix<f64> {
    let n = table.len();
    let grid = TorusGrid::new(n).expect("table length is a valid grid size");
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let col = PeriodicField::from_vec_unchecked(grid, e0).apply_table(table).into_values();
    DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

pub(crate) fn to_vector(f: &PeriodicField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub(crate) fn to_field(grid: TorusGrid, v: &DVector<f64>) -> Result<PeriodicField> {
    PeriodicField::new(grid, v.iter().copied().collect())
}

/// Named residual and solvability values collected during a solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub residuals: BTreeMap<String, f64>,
    pub solvability: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub(crate) fn check_solvability(&mut self, equation: &'static str, value: f64) -> Result<()> {
        self.solvability.insert(equation.to_string(), value);
        if !(value.abs() <= SOLVABILITY_TOL) {
            return Err(Error::Solvability { equation, value, tolerance: SOLVABILITY_TOL });
        }
        Ok(())
    }

    pub(crate) fn check_residual(&mut self, equation: &'static str, value: f64) -> Result<()> {
        self.residuals.insert(equation.to_string(), value);
        if !(value <= RESIDUAL_TOL) {
            return Err(Error::Residual { equation, value, tolerance: RESIDUAL_TOL });
        }
        Ok(())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, b| a.max(*b))
    }
}

/// Secant iteration for the shift `c` with `c = ∫ raw · density(raw − c)`; used to
/// build centered drifts from a raw profile.
pub(crate) fn centering_shift(mut weighted_mean: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<f64> {
    let g = |c: f64, wm: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> { Ok(wm(c)? - c) };
    let mut c0 = 0.0;
    let mut g0 = g(c0, &mut weighted_mean)?;
    let mut c1 = c0 + g0;
    for _ in 0..60 {
        let g1 = g(c1, &mut weighted_mean)?;
        if g1.abs() <= tol {
            return Ok(c1);
        }
        let denom = g1 - g0;
        let next = if denom.abs() > 1e-300 { c1 - g1 * (c1 - c0) / denom } else { c1 + g1 };
        c0 = c1;
        g0 = g1;
        c1 = next;
    }
    Err(Error::Singular("centering shift iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_tables_match_kernel_quadrature() {
        let k = IntegrableKernel::gaussian(0.3, 1.0).unwrap();
        let grid = TorusGrid::new(32).unwrap();
        let quad = KernelQuadrature::new(&k);
        let s = KernelSymbols::from_quadrature(&quad, grid);
        let ws = spectral::angular_wavenumbers(32, 1.0);
        for (j, w) in ws.iter().enumerate() {
            assert!((s.zeroth[j] - quad.symbol(*w)).abs() < 1e-14);
            assert!((s.first[j] - quad.first_symbol(*w)).abs() < 1e-14);
            assert!((s.zeroth[j] - k.closed_form_symbol(*w)).abs() < 1e-9);
        }
    }

    #[test]
    fn first_moment_operators_against_direct_quadrature() {
        let k = IntegrableKernel::uniform(0.7, 1.3).unwrap();
        let grid = TorusGrid::new(64).unwrap();
        let quad = KernelQuadrature::new(&k);
        let s = KernelSymbols::from_quadrature(&quad, grid);
        let f = |y: f64| (2.0 * std::f64::consts::PI * y).sin() + 0.3 * (6.0 * std::f64::consts::PI * y).cos();
        let field = PeriodicField::from_fn(grid, f);
        let fwd = s.first_forward(&field);
        let bwd = s.first_backward(&field);
        let sec = s.second_backward(&field);
        let conv = s.convolve(&field);
        for (j, y) in grid.points().into_iter().enumerate() {
            assert!((fwd.values()[j] - quad.integrate(|z| z * f(y + z))).abs() < 1e-12);
            assert!((bwd.values()[j] - quad.integrate(|z| z * f(y - z))).abs() < 1e-12);
            assert!((sec.values()[j] - quad.integrate(|z| z * z * f(y - z))).abs() < 1e-12);
            assert!((conv.values()[j] - quad.integrate(|z| f(y - z))).abs() < 1e-12);
        }
    }

    #[test]
    fn circulant_table_matches_field_action() {
        let k = IntegrableKernel::laplace(0.2, 1.0).unwrap();
        let grid = TorusGrid::new(16).unwrap();
        let s = KernelSymbols::new(&k, grid);
        let f = PeriodicField::from_fn(grid, |y| (y * 7.0).sin().exp());
        let via = s.convolution_matrix() * to_vector(&f);
        let direct = s.convolve(&f);
        for (a, b) in via.iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn secant_finds_fixed_point() {
        let c = centering_shift(|c| Ok(0.5 + 0.1 * (c * 3.0).sin()), 1e-14).unwrap();
        assert!((c - 0.5 - 0.1 * (c * 3.0).sin()).abs() < 1e-14);
    }
}
