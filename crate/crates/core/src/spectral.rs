//! Periodic grid calculus on equispaced grids.
//!
//! Coefficients use the normalized convention `f̂_k = (1/n) Σ_j f_j e^{-2πi k j / n}`, so
//! `f_j = Σ_k f̂_k e^{iω_k x_j}` with `ω_k = 2πk/P` on a grid of period `P`. The Nyquist
//! mode is treated as a real cosine: a multiplier `m(ω)` acts on it through `Re m(ω_N)`,
//! which zeroes it for odd derivatives and keeps every operator real.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Normalized forward transform of real samples.
pub fn forward(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(n, false).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

/// Inverse of [`forward`]; returns the real part.
pub fn inverse(coeffs: &[Complex64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    plan(n, true).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Signed integer frequency of FFT slot `j`; the Nyquist slot maps to `+n/2`.
pub fn frequency_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wavenumbers `2πk/P` in FFT order.
pub fn angular_wavenumbers(n: usize, period: f64) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * frequency_index(j, n) as f64 / period).collect()
}

/// Multiply spectral coefficients in place by `m(ω)`.
pub fn scale_coefficients(coeffs: &mut [Complex64], period: f64, m: impl Fn(f64) -> Complex64) {
    let n = coeffs.len();
    for (j, c) in coeffs.iter_mut().enumerate() {
        let w = 2.0 * PI * frequency_index(j, n) as f64 / period;
        let mut s = m(w);
        if n.is_multiple_of(2) && j == n / 2 {
            s = Complex64::new(s.re, 0.0);
        }
        *c *= s;
    }
}

/// Apply the Fourier multiplier `m(ω)` to real periodic samples.
///
/// `m` must satisfy `m(-ω) = conj(m(ω))` for the result to be real.
pub fn apply_multiplier(values: &[f64], period: f64, m: impl Fn(f64) -> Complex64) -> Vec<f64> {
    let mut c = forward(values);
    scale_coefficients(&mut c, period, m);
    inverse(&c)
}

pub fn derivative_symbol(order: u32) -> impl Fn(f64) -> Complex64 {
    move |w| Complex64::new(0.0, w).powu(order)
}

/// Symbol `|ω|^α` of the fractional Laplacian; the zero mode maps to 0.
pub fn fractional_symbol(alpha: f64) -> impl Fn(f64) -> Complex64 {
    move |w| {
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(w.abs().powf(alpha), 0.0)
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is outside (0, 2)")))
    }
}

/// Evaluate the trigonometric interpolant of the coefficients at arbitrary points
/// of a grid with period `period`.
pub fn interpolate(coeffs: &[Complex64], period: f64, points: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let half = n / 2;
    points
        .iter()
        .map(|&x| {
            let theta = 2.0 * PI * x / period;
            let step = Complex64::from_polar(1.0, theta);
            let mut acc = coeffs[0].re;
            let mut phase = Complex64::new(1.0, 0.0);
            for k in 1..half {
                phase *= step;
                // conjugate pair k and -k
                acc += 2.0 * (coeffs[k] * phase).re;
            }
            if n.is_multiple_of(2) && half > 0 {
                acc += coeffs[half].re * (theta * half as f64).cos();
            }
            acc
        })
        .collect()
}

/// Equispaced grid on the unit torus `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("torus point count must be a power of two >= 8, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n }
    }
}

/// Real function of period 1 sampled on a [`TorusGrid`], with lazily cached spectrum.
#[derive(Clone, Debug)]
pub struct PeriodicField {
    grid: TorusGrid,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl PartialEq for PeriodicField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl PeriodicField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch { expected: grid.n(), got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at index {bad}")));
        }
        Ok(Self { grid, values, spectrum: OnceLock::new() })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values, spectrum: OnceLock::new() }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.n()])
    }

    pub fn from_coefficients(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n() {
            return Err(Error::LengthMismatch { expected: grid.n(), got: coeffs.len() });
        }
        Ok(Self::from_vec_unchecked(grid, inverse(&coeffs)))
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mutable access to the samples. Drops the cached spectrum.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.spectrum = OnceLock::new();
        &mut self.values
    }

    pub fn coefficients(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| forward(&self.values))
    }

    pub fn has_cached_coefficients(&self) -> bool {
        self.spectrum.get().is_some()
    }

    /// `∫_0^1 f` as an h-weighted sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h()
    }

    /// `∫_0^1 f g`.
    pub fn inner(&self, other: &PeriodicField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.h()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> PeriodicField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_vec_unchecked(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn add(&self, other: &PeriodicField) -> PeriodicField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PeriodicField) -> PeriodicField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &PeriodicField) -> PeriodicField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> PeriodicField {
        self.map(|v| s * v)
    }

    pub fn offset(&self, c: f64) -> PeriodicField {
        self.map(|v| v + c)
    }

    pub fn apply_multiplier(&self, m: impl Fn(f64) -> Complex64) -> PeriodicField {
        let mut c = self.coefficients().to_vec();
        scale_coefficients(&mut c, 1.0, m);
        Self::from_vec_unchecked(self.grid, inverse(&c))
    }

    /// Multiply coefficient `j` by `table[j]` (Nyquist slot by its real part).
    pub fn apply_table(&self, table: &[Complex64]) -> PeriodicField {
        let n = self.n();
        let mut c = self.coefficients().to_vec();
        for (j, (ci, t)) in c.iter_mut().zip(table).enumerate() {
            if j == n / 2 {
                *ci *= t.re;
            } else {
                *ci *= t;
            }
        }
        Self::from_vec_unchecked(self.grid, inverse(&c))
    }

    pub fn derivative(&self, order: u32) -> PeriodicField {
        self.apply_multiplier(derivative_symbol(order))
    }

    /// `x ↦ f(x + z)` via a spectral phase shift.
    pub fn shifted(&self, z: f64) -> PeriodicField {
        self.apply_multiplier(|w| Complex64::from_polar(1.0, w * z))
    }

    /// Trigonometric interpolant evaluated at arbitrary points (period 1).
    pub fn evaluate(&self, points: &[f64]) -> Vec<f64> {
        interpolate(self.coefficients(), 1.0, points)
    }

    pub fn evaluate_at(&self, x: f64) -> f64 {
        self.evaluate(&[x])[0]
    }

    /// Resample onto another torus grid through the interpolant.
    pub fn resample(&self, grid: TorusGrid) -> PeriodicField {
        Self::from_vec_unchecked(grid, self.evaluate(&grid.points()))
    }
}

/// `order`-th derivative by the multiplier `(2πik)^order`.
pub fn spectral_derivative(f: &PeriodicField, order: u32) -> Result<PeriodicField> {
    if order == 0 {
        return Err(Error::param("order", "derivative order must be positive"));
    }
    Ok(f.derivative(order))
}

/// `Σ_k |2πk|^α f̂_k e^{2πikx}`.
pub fn fractional_laplacian_periodic(f: &PeriodicField, alpha: f64) -> Result<PeriodicField> {
    check_alpha(alpha)?;
    Ok(f.apply_multiplier(fractional_symbol(alpha)))
}

/// `(f ⋆ s)_j = h Σ_m s_m f_{j-m}`.
pub fn circular_convolution(f: &PeriodicField, kernel_samples: &[f64]) -> Result<PeriodicField> {
    let n = f.n();
    if kernel_samples.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: kernel_samples.len() });
    }
    let ks = forward(kernel_samples);
    let fs = f.coefficients();
    // DFT of the h-weighted circular sum is h·n·ŝ_k·f̂_k = ŝ_k f̂_k·n·h, and n·h = 1 on the torus.
    let out: Vec<Complex64> = fs.iter().zip(&ks).map(|(a, b)| a * b).collect();
    Ok(PeriodicField::from_vec_unchecked(f.grid(), inverse(&out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(TorusGrid::new(4).is_err());
        assert!(TorusGrid::new(24).is_err());
        let g = grid(16);
        assert_eq!(g.points().len(), 16);
        assert_eq!(g.point(0), 0.0);
        assert!(g.points().last().copied().unwrap() < 1.0);
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid(32);
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x).sin());
        let d = spectral_derivative(&f, 1).unwrap();
        for (x, v) in g.points().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, 2.0 * PI * (2.0 * PI * x).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = PeriodicField::constant(grid(16), 3.0);
        assert!(spectral_derivative(&f, 1).unwrap().max_abs() < 1e-14);
        assert!(spectral_derivative(&f, 0).is_err());
    }

    #[test]
    fn second_derivative_of_cos4pi() {
        let g = grid(32);
        let f = PeriodicField::from_fn(g, |x| (4.0 * PI * x).cos());
        let d = spectral_derivative(&f, 2).unwrap();
        for (x, v) in g.points().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, -16.0 * PI * PI * (4.0 * PI * x).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn fractional_laplacian_eigenfunction() {
        let g = grid(64);
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x).cos());
        let d = fractional_laplacian_periodic(&f, 1.0).unwrap();
        for (x, v) in g.points().iter().zip(d.values()) {
            assert_abs_diff_eq!(*v, 2.0 * PI * (2.0 * PI * x).cos(), epsilon = 1e-10);
        }
        let one = PeriodicField::constant(g, 1.0);
        assert!(fractional_laplacian_periodic(&one, 0.7).unwrap().max_abs() < 1e-14);
        assert!(fractional_laplacian_periodic(&one, 2.0).is_err());
        assert!(fractional_laplacian_periodic(&one, 0.0).is_err());
    }

    #[test]
    fn fractional_symbol_is_monotone() {
        let s = fractional_symbol(1.3);
        let w = angular_wavenumbers(64, 1.0);
        let mut mags: Vec<(f64, f64)> = w.iter().map(|&w| (w.abs(), s(w).re)).collect();
        mags.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for p in mags.windows(2) {
            assert!(p[1].1 >= p[0].1);
        }
    }

    #[test]
    fn convolution_with_discrete_delta_is_identity() {
        let g = grid(32);
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos());
        let mut delta = vec![0.0; 32];
        delta[0] = 1.0 / g.h();
        let out = circular_convolution(&f, &delta).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(circular_convolution(&f, &delta[..16]).is_err());
    }

    #[test]
    fn convolution_of_constant_is_mass() {
        let g = grid(32);
        let kernel: Vec<f64> = g.points().iter().map(|x| 1.0 + x * x).collect();
        let mass = kernel.iter().sum::<f64>() * g.h();
        let out = circular_convolution(&PeriodicField::constant(g, 1.0), &kernel).unwrap();
        for v in out.values() {
            assert_abs_diff_eq!(*v, mass, epsilon = 1e-12);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let g = grid(32);
        let n = g.n();
        // symmetric kernel on the torus: depends on the periodic distance
        let kernel: Vec<f64> = (0..n)
            .map(|j| {
                let d = (j.min(n - j)) as f64 * g.h();
                (-20.0 * d * d).exp()
            })
            .collect();
        let f = PeriodicField::from_fn(g, |x| (2.0 * PI * x).cos());
        let fast = circular_convolution(&f, &kernel).unwrap();
        let c1: f64 = kernel.iter().enumerate().map(|(j, s)| s * (2.0 * PI * g.point(j)).cos()).sum::<f64>() * g.h();
        for j in 0..n {
            let direct: f64 = (0..n).map(|m| kernel[m] * f.values()[(j + n - m) % n]).sum::<f64>() * g.h();
            assert_abs_diff_eq!(fast.values()[j], direct, epsilon = 1e-12);
            assert_abs_diff_eq!(fast.values()[j], c1 * f.values()[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolation_and_shift_are_exact_for_trig_polynomials() {
        let g = grid(16);
        let f = PeriodicField::from_fn(g, |x| 1.0 + (2.0 * PI * x).sin() - 0.5 * (6.0 * PI * x).cos());
        let exact = |x: f64| 1.0 + (2.0 * PI * x).sin() - 0.5 * (6.0 * PI * x).cos();
        for &x in &[0.013, 0.37, 0.9, 1.7, -2.2] {
            assert_abs_diff_eq!(f.evaluate_at(x), exact(x), epsilon = 1e-12);
        }
        let s = f.shifted(0.21);
        for (x, v) in g.points().iter().zip(s.values()) {
            assert_abs_diff_eq!(*v, exact(x + 0.21), epsilon = 1e-12);
        }
    }

    #[test]
    fn mutation_drops_cache() {
        let g = grid(8);
        let mut f = PeriodicField::constant(g, 1.0);
        assert_abs_diff_eq!(f.coefficients()[0].re, 1.0, epsilon = 1e-15);
        assert!(f.has_cached_coefficients());
        f.values_mut()[0] = 9.0;
        assert!(!f.has_cached_coefficients());
        assert_abs_diff_eq!(f.coefficients()[0].re, 2.0, epsilon = 1e-15);
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n)
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(v in field_strategy(64)) {
            let f = PeriodicField::new(grid(64), v.clone()).unwrap();
            let back = inverse(f.coefficients());
            let scale = v.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
            for (a, b) in back.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            let energy = f.norm_l2().powi(2);
            let spectral_energy: f64 = f.coefficients().iter().map(|c| c.norm_sqr()).sum();
            prop_assert!((energy - spectral_energy).abs() <= 1e-10 * energy.max(1e-300));
        }

        #[test]
        fn operators_are_linear(
            u in field_strategy(32), v in field_strategy(32),
            a in -3.0f64..3.0, b in -3.0f64..3.0, alpha in 0.1f64..1.9,
        ) {
            let g = grid(32);
            let fu = PeriodicField::new(g, u).unwrap();
            let fv = PeriodicField::new(g, v).unwrap();
            let comb = fu.scale(a).add(&fv.scale(b));
            let kernel: Vec<f64> = (0..32).map(|j| ((j as f64) * 0.3).cos()).collect();
            let ops: Vec<Box<dyn Fn(&PeriodicField) -> PeriodicField>> = vec![
                Box::new(|f| f.derivative(1)),
                Box::new(|f| f.derivative(2)),
                Box::new(move |f| fractional_laplacian_periodic(f, alpha).unwrap()),
                Box::new(move |f| circular_convolution(f, &kernel).unwrap()),
            ];
            for op in &ops {
                let lhs = op(&comb);
                let rhs = op(&fu).scale(a).add(&op(&fv).scale(b));
                let scale = 1.0 + rhs.max_abs();
                prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn fractional_output_is_real(v in field_strategy(32), alpha in 0.1f64..1.9) {
            let f = PeriodicField::new(grid(32), v).unwrap();
            let mut c = f.coefficients().to_vec();
            scale_coefficients(&mut c, 1.0, fractional_symbol(alpha));
            let mut buf = c.clone();
            plan(32, true).process(&mut buf);
            let scale = 1.0 + buf.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
            for z in &buf {
                prop_assert!(z.im.abs() <= 1e-10 * scale);
            }
        }
    }
}
