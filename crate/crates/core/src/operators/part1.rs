//! Jump-diffusion operators on the line window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{times, zip3, LineGrid, LineOperator, OperatorKind, OperatorLabel};
use crate::cell::CellSolutionI;
use crate::coefficients::{CoefficientSetI, Epsilon};
use crate::error::{Error, Result};
use crate::kernel::KernelQuadrature;
use crate::spectral::PeriodicField;

/// `a(x/ε)u'' + ε⁻¹b(x/ε)u' + ε⁻²λ(x/ε)∫c(z)(u(x − εz) − u(x))dz`.
///
/// The jump part equals the literal `ε⁻³λ∫c((x − y)/ε)(u(y) − u(x))dy` after substituting
/// `y = x − εz`; the effective jump intensity is therefore `λ a₁ / ε²`.
#[derive(Clone, Debug)]
pub struct JumpDiffusionOperator {
    grid: LineGrid,
    eps: Epsilon,
    a: Vec<f64>,
    b: Vec<f64>,
    lambda: Vec<f64>,
    /// `ĉ(εω_k)` per line mode.
    jump_symbol: Vec<f64>,
}

impl JumpDiffusionOperator {
    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn coefficient_a(&self) -> &[f64] {
        &self.a
    }

    pub fn coefficient_lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn kernel_mass(&self) -> f64 {
        self.jump_symbol[0]
    }

    /// `∫c(z)u(x − εz)dz − a₁u`
    pub fn jump_difference(&self, u: &[f64]) -> Vec<f64> {
        let conv = self.grid.apply_real_table(u, &self.jump_symbol);
        let a1 = self.kernel_mass();
        conv.iter().zip(u).map(|(c, v)| c - a1 * v).collect()
    }
}

impl LineOperator for JumpDiffusionOperator {
    fn grid(&self) -> LineGrid {
        self.grid
    }

    fn label(&self) -> OperatorLabel {
        OperatorLabel { kind: OperatorKind::HeterogeneousJumpDiffusion, eps: Some(self.eps.value()) }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let e = self.eps.value();
        let d1 = self.grid.derivative(u, 1);
        let d2 = self.grid.derivative(u, 2);
        let jump = self.jump_difference(u);
        (0..u.len()).map(|j| self.a[j] * d2[j] + self.b[j] * d1[j] / e + self.lambda[j] * jump[j] / (e * e)).collect()
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        let e = self.eps.value();
        let diff = self.grid.derivative(&times(&self.a, v), 2);
        let drift = self.grid.derivative(&times(&self.b, v), 1);
        let jump = self.jump_difference(&times(&self.lambda, v));
        zip3(&diff, &drift, &jump, |p, q, r| p - q / e + r / (e * e))
    }
}

pub fn assemble_t_eps(set: &CoefficientSetI, eps: Epsilon, grid: LineGrid) -> Result<JumpDiffusionOperator> {
    grid.check_resolves(eps)?;
    if eps.value() * set.kernel.radius > grid.half_width() {
        return Err(Error::Resolution(format!(
            "scaled kernel support {} exceeds the half window {}",
            eps.value() * set.kernel.radius,
            grid.half_width()
        )));
    }
    let quad = KernelQuadrature::new(&set.kernel);
    let jump_symbol = grid.wavenumbers().iter().map(|w| quad.symbol(eps.value() * w)).collect();
    Ok(JumpDiffusionOperator {
        grid,
        eps,
        a: grid.sample_cell_field(&set.a, eps),
        b: grid.sample_cell_field(&set.b, eps),
        lambda: grid.sample_cell_field(&set.lambda, eps),
        jump_symbol,
    })
}

/// `Q u''`; self-adjoint.
#[derive(Clone, Copy, Debug)]
pub struct EffectiveDiffusion {
    grid: LineGrid,
    pub q: f64,
}

impl LineOperator for EffectiveDiffusion {
    fn grid(&self) -> LineGrid {
        self.grid
    }

    fn label(&self) -> OperatorLabel {
        OperatorLabel { kind: OperatorKind::HomogenizedJumpDiffusion, eps: None }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.grid.derivative(u, 2).into_iter().map(|v| self.q * v).collect()
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v)
    }
}

/// Homogenized drift operator and the multiplicative noise coefficient `σ̄`.
pub fn assemble_t0(q: f64, sigma_bar: f64, grid: LineGrid) -> Result<(EffectiveDiffusion, f64)> {
    if !(q > 0.0) {
        return Err(Error::param("Q", format!("effective diffusivity must be positive, got {q}")));
    }
    Ok((EffectiveDiffusion { grid, q }, sigma_bar))
}

/// `ξ^ε = m(x/ε)(ξ + ε h₁(x/ε) ξ' + ε² h₂(x/ε) ξ'')`.
pub fn corrector_test_function_i(grid: LineGrid, xi: &[f64], cell: &CellSolutionI, eps: Epsilon) -> Vec<f64> {
    let e = eps.value();
    let m = grid.sample_cell_field(&cell.m, eps);
    let h1 = grid.sample_cell_field(&cell.h1, eps);
    let h2 = grid.sample_cell_field(&cell.h2, eps);
    let d1 = grid.derivative(xi, 1);
    let d2 = grid.derivative(xi, 2);
    (0..xi.len()).map(|j| m[j] * (xi[j] + e * h1[j] * d1[j] + e * e * h2[j] * d2[j])).collect()
}

/// `‖(T^ε)*ξ^ε − Q ξ''‖_{L²}` on the window.
pub fn residual_part_i(
    xi: &[f64],
    cell: &CellSolutionI,
    set: &CoefficientSetI,
    eps: Epsilon,
    grid: LineGrid,
) -> Result<f64> {
    let op = assemble_t_eps(set, eps, grid)?;
    let test = corrector_test_function_i(grid, xi, cell, eps);
    let lhs = op.adjoint_apply(&test);
    let target = grid.derivative(xi, 2);
    let diff: Vec<f64> = lhs.iter().zip(&target).map(|(l, t)| l - cell.q * t).collect();
    Ok(grid.norm_l2(&diff))
}

/// Largest value over `trials` random fields of the `m`-weighted form
/// `⟨m(x/ε) B^ε u, u⟩ + ε⁻¹⟨β(x/ε) u', u⟩`, `β = b m − (a m)'`, which is `≤ 0` when `m`
/// is the invariant density.
pub fn dissipativity_check_i(
    set: &CoefficientSetI,
    m: &PeriodicField,
    eps: Epsilon,
    grid: LineGrid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let op = assemble_t_eps(set, eps, grid)?;
    let e = eps.value();
    let beta = set.b.mul(m).sub(&set.a.mul(m).derivative(1));
    let beta = grid.sample_cell_field(&beta, eps);
    let lm = times(&grid.sample_cell_field(m, eps), &op.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let u = if t == 0 { vec![1.0; grid.n()] } else { grid.random_band_limited(grid.n() / 4, &mut rng) };
        let jump = op.jump_difference(&u);
        let du = grid.derivative(&u, 1);
        let form = grid.inner(&times(&lm, &jump), &u) / (e * e) + grid.inner(&times(&beta, &du), &u) / e;
        worst = worst.max(form);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_i;
    use crate::fixtures;
    use std::f64::consts::PI;

    fn eps(k: u32) -> Epsilon {
        Epsilon::from_reciprocal(k).unwrap()
    }

    #[test]
    fn annihilates_constants_and_transposes_exactly() {
        let set = fixtures::varcoef_1(32).unwrap();
        let g = LineGrid::with_cells(1.0, eps(4), 32).unwrap();
        let op = assemble_t_eps(&set, eps(4), g).unwrap();
        assert!(op.apply(&vec![1.0; g.n()]).iter().all(|v| v.abs() < 1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = g.random_band_limited(40, &mut rng);
        let v = g.random_band_limited(60, &mut rng);
        let lhs = g.inner(&op.apply(&u), &v);
        let rhs = g.inner(&u, &op.adjoint_apply(&v));
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0), "{lhs} {rhs}");
        let dense = op.to_dense();
        let via: Vec<f64> = (dense.transpose() * nalgebra::DVector::from_vec(v.clone())).iter().copied().collect();
        let direct = op.adjoint_apply(&v);
        let scale = direct.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(via.iter().zip(&direct).all(|(a, b)| (a - b).abs() <= 1e-11 * scale));
    }

    #[test]
    fn diffusion_part_on_a_fourier_mode() {
        let set = fixtures::const_1(16).unwrap();
        let set = CoefficientSetI { lambda: set.lambda.scale(0.0), ..set };
        let g = LineGrid::with_cells(1.0, eps(2), 16).unwrap();
        let op = assemble_t_eps(&set, eps(2), g).unwrap();
        let u = g.sample(|x| (2.0 * PI * x / 2.0).cos());
        let tu = op.apply(&u);
        let l = g.half_width();
        assert!(tu.iter().zip(&u).all(|(t, v)| (t + (PI / l).powi(2) * v).abs() < 1e-10));
    }

    #[test]
    fn jump_part_against_direct_sum() {
        let set = fixtures::varcoef_1(32).unwrap();
        let e = eps(4);
        let g = LineGrid::with_cells(1.0, e, 32).unwrap();
        let op = assemble_t_eps(&set, e, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = g.random_band_limited(30, &mut rng);
        let jump = op.jump_difference(&u);
        let (n, dx, p) = (g.n(), g.dx(), g.period());
        let a1 = op.kernel_mass();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let mut d = g.point(i) - g.point(j);
                d -= p * (d / p).round();
                acc += dx * set.kernel.evaluate(d / e.value()) / e.value() * u[j];
            }
            worst = worst.max((acc - a1 * u[i] - jump[i]).abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn constant_coefficient_corrector_is_the_test_function() {
        let set = fixtures::const_1(16).unwrap();
        let cell = solve_cell_i(&set).unwrap();
        let g = LineGrid::with_cells(2.0, eps(4), 16).unwrap();
        let xi = g.gaussian_bump(0.0, 0.3);
        let t = corrector_test_function_i(g, &xi, &cell, eps(4));
        assert!(t.iter().zip(&xi).all(|(a, b)| (a - b).abs() < 1e-12));
        let zero = corrector_test_function_i(g, &vec![0.0; g.n()], &cell, eps(4));
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn homogenized_operator_examples() {
        let g = LineGrid::new(1.0, 64).unwrap();
        let (t0, s) = assemble_t0(4.0 / 3.0, 0.7, g).unwrap();
        let u = g.sample(|x| (PI * x).sin());
        let tu = t0.apply(&u);
        assert!(tu.iter().zip(&u).all(|(a, b)| (a + 4.0 / 3.0 * PI * PI * b).abs() < 1e-10));
        assert_eq!(s, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, q) = (g.random_band_limited(20, &mut rng), g.random_band_limited(20, &mut rng));
        assert!(
            (g.inner(&t0.apply(&p), &q) - g.inner(&p, &t0.apply(&q))).abs()
                < 1e-12 * g.inner(&t0.apply(&p), &q).abs().max(1.0)
        );
        assert!(assemble_t0(0.0, 1.0, g).is_err());
    }

    #[test]
    fn residual_decreases_and_is_translation_invariant() {
        let set = fixtures::varcoef_1(32).unwrap();
        let cell = solve_cell_i(&set).unwrap();
        let mut last = f64::INFINITY;
        for k in [4, 8, 16] {
            let g = LineGrid::with_cells(2.0, eps(k), 32).unwrap();
            let xi = g.gaussian_bump(0.0, 0.3);
            let r = residual_part_i(&xi, &cell, &set, eps(k), g).unwrap();
            assert!(r < last, "eps 1/{k}: {r} after {last}");
            last = r;
        }
        let e = eps(8);
        let g = LineGrid::with_cells(3.0, e, 32).unwrap();
        let r0 = residual_part_i(&g.gaussian_bump(0.0, 0.3), &cell, &set, e, g).unwrap();
        let r1 = residual_part_i(&g.gaussian_bump(3.0 * e.value(), 0.3), &cell, &set, e, g).unwrap();
        assert!((r0 - r1).abs() < 1e-8);
    }

    #[test]
    fn m_weighted_form_is_dissipative() {
        let set = fixtures::varcoef_1(32).unwrap();
        let cell = solve_cell_i(&set).unwrap();
        let e = eps(8);
        let g = LineGrid::with_cells(1.0, e, 32).unwrap();
        let worst = dissipativity_check_i(&set, &cell.m, e, g, 100, 4).unwrap();
        assert!(worst <= 1e-9, "{worst}");
    }
}
