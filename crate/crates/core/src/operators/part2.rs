//! α-stable operators on the line window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{times, LineGrid, LineOperator, OperatorKind, OperatorLabel};
use crate::cell::CellSolutionII;
use crate::coefficients::{CoefficientSetII, Epsilon};
use crate::error::Result;

/// `−δ^α(x/ε)(−Δ)^{α/2}u + ε^{1−α}d(x/ε)u' + g(x/ε)u' + (f(x/ε) − ε^{−α}e(x/ε))u`.
#[derive(Clone, Debug)]
pub struct StableOperator {
    grid: LineGrid,
    eps: Epsilon,
    alpha: f64,
    delta_alpha: Vec<f64>,
    /// `ε^{1−α}d + g`
    advection: Vec<f64>,
    /// `f − ε^{−α}e`
    reaction: Vec<f64>,
}

impl StableOperator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn delta_alpha(&self) -> &[f64] {
        &self.delta_alpha
    }

    pub fn reaction(&self) -> &[f64] {
        &self.reaction
    }
}

impl LineOperator for StableOperator {
    fn grid(&self) -> LineGrid {
        self.grid
    }

    fn label(&self) -> OperatorLabel {
        OperatorLabel { kind: OperatorKind::HeterogeneousStable, eps: Some(self.eps.value()) }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let frac = self.grid.fractional_laplacian(u, self.alpha);
        let du = self.grid.derivative(u, 1);
        (0..u.len())
            .map(|j| -self.delta_alpha[j] * frac[j] + self.advection[j] * du[j] + self.reaction[j] * u[j])
            .collect()
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        let frac = self.grid.fractional_laplacian(&times(&self.delta_alpha, v), self.alpha);
        let adv = self.grid.derivative(&times(&self.advection, v), 1);
        (0..v.len()).map(|j| -frac[j] - adv[j] + self.reaction[j] * v[j]).collect()
    }
}

pub fn assemble_v_eps(set: &CoefficientSetII, eps: Epsilon, grid: LineGrid) -> Result<StableOperator> {
    grid.check_resolves(eps)?;
    let e = eps.value();
    let alpha = set.alpha;
    let d = grid.sample_cell_field(&set.d, eps);
    let g = grid.sample_cell_field(&set.g, eps);
    let ee = grid.sample_cell_field(&set.e, eps);
    let f = grid.sample_cell_field(&set.f, eps);
    Ok(StableOperator {
        grid,
        eps,
        alpha,
        delta_alpha: grid.sample_cell_field(&set.delta_alpha(), eps),
        advection: d.iter().zip(&g).map(|(d, g)| e.powf(1.0 - alpha) * d + g).collect(),
        reaction: f.iter().zip(&ee).map(|(f, ee)| f - e.powf(-alpha) * ee).collect(),
    })
}

/// `−δ̄α(−Δ)^{α/2}u + ḡu' + f̄u`.
#[derive(Clone, Copy, Debug)]
pub struct EffectiveStable {
    grid: LineGrid,
    pub alpha: f64,
    pub delta_bar_alpha: f64,
    pub g_bar: f64,
    pub f_bar: f64,
}

impl EffectiveStable {
    pub fn new(grid: LineGrid, alpha: f64, cell: &CellSolutionII) -> Self {
        let c = &cell.effective;
        Self { grid, alpha, delta_bar_alpha: c.delta_bar_alpha, g_bar: c.g_bar, f_bar: c.f_bar }
    }

    pub fn from_parts(grid: LineGrid, alpha: f64, delta_bar_alpha: f64, g_bar: f64, f_bar: f64) -> Self {
        Self { grid, alpha, delta_bar_alpha, g_bar, f_bar }
    }

    fn combine(&self, u: &[f64], advection: f64) -> Vec<f64> {
        let frac = self.grid.fractional_laplacian(u, self.alpha);
        let du = self.grid.derivative(u, 1);
        (0..u.len()).map(|j| -self.delta_bar_alpha * frac[j] + advection * du[j] + self.f_bar * u[j]).collect()
    }
}

impl LineOperator for EffectiveStable {
    fn grid(&self) -> LineGrid {
        self.grid
    }

    fn label(&self) -> OperatorLabel {
        OperatorLabel { kind: OperatorKind::HomogenizedStable, eps: None }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.combine(u, self.g_bar)
    }

    fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        self.combine(v, -self.g_bar)
    }
}

/// `ξ^ε = m₁(x/ε)(ξ + ε h₃(x/ε) ξ')` with `h₃` shifted to mean zero.
///
/// The cell solution keeps `∫h₃ = 1`; the shift moves `ξ^ε` by `ε m₁ ξ'` only, and without
/// it constant coefficients would leave an `O(ε)` residual.
pub fn corrector_test_function_ii(grid: LineGrid, xi: &[f64], cell: &CellSolutionII, eps: Epsilon) -> Vec<f64> {
    let e = eps.value();
    let m1 = grid.sample_cell_field(&cell.m1, eps);
    let h3 = grid.sample_cell_field(&cell.h3.offset(-cell.h3.integral()), eps);
    let d1 = grid.derivative(xi, 1);
    (0..xi.len()).map(|j| m1[j] * (xi[j] + e * h3[j] * d1[j])).collect()
}

/// `|((V^ε)*ξ^ε, ψ) − ((V⁰)*ξ, ψ)|`.
pub fn residual_part_ii(
    xi: &[f64],
    psi: &[f64],
    cell: &CellSolutionII,
    set: &CoefficientSetII,
    eps: Epsilon,
    grid: LineGrid,
) -> Result<f64> {
    let op = assemble_v_eps(set, eps, grid)?;
    let hom = EffectiveStable::new(grid, set.alpha, cell);
    let test = corrector_test_function_ii(grid, xi, cell, eps);
    let lhs = grid.inner(&op.adjoint_apply(&test), psi);
    let rhs = grid.inner(&hom.adjoint_apply(xi), psi);
    Ok((lhs - rhs).abs())
}

/// Largest `⟨m₁(x/ε) L^ε v, v⟩` over `trials` fields, where `L^ε` is the stable part with its
/// drift (no `g, e, f`). Nonpositive when `m₁` is the invariant density.
pub fn dissipativity_check_ii(
    set: &CoefficientSetII,
    m1: &crate::spectral::PeriodicField,
    eps: Epsilon,
    grid: LineGrid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    grid.check_resolves(eps)?;
    let e = eps.value();
    let delta_alpha = grid.sample_cell_field(&set.delta_alpha(), eps);
    let drift: Vec<f64> = grid.sample_cell_field(&set.d, eps).iter().map(|d| e.powf(1.0 - set.alpha) * d).collect();
    let weight = grid.sample_cell_field(m1, eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let v = if t == 0 { vec![1.0; grid.n()] } else { grid.random_band_limited(grid.n() / 4, &mut rng) };
        let frac = grid.fractional_laplacian(&v, set.alpha);
        let dv = grid.derivative(&v, 1);
        let lv: Vec<f64> = (0..v.len()).map(|j| -delta_alpha[j] * frac[j] + drift[j] * dv[j]).collect();
        worst = worst.max(grid.inner(&times(&weight, &lv), &v));
    }
    Ok(worst)
}
