//! Jump-diffusion cell problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::linalg::{self, circulant, normalized_null_vector, scale_cols, scale_rows, solve_bordered};
use super::{centering_shift, to_field, to_vector, Diagnostics, KernelSymbols};
use crate::coefficients::CoefficientSetI;
use crate::error::{Error, Result};
use crate::spectral::{derivative_symbol, PeriodicField, TorusGrid};

/// Dense discretization of the fast generator
/// `a u'' + b u' + λ ∫c(z)(u(y + z) − u(y))dz` on the torus grid.
#[derive(Clone, Debug)]
pub struct TorusGeneratorI {
    set: CoefficientSetI,
    symbols: KernelSymbols,
    matrix: DMatrix<f64>,
    first_derivative: DMatrix<f64>,
}

impl TorusGeneratorI {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Adjoint in the `h`-weighted inner product, i.e. the transpose.
    pub fn adjoint(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }

    pub fn symbols(&self) -> &KernelSymbols {
        &self.symbols
    }

    pub fn set(&self) -> &CoefficientSetI {
        &self.set
    }

    pub fn grid(&self) -> TorusGrid {
        self.set.grid()
    }

    /// Matrix-free application through the FFT.
    pub fn apply(&self, u: &PeriodicField) -> PeriodicField {
        let s = &self.set;
        let jump = self.symbols.convolve(u).sub(&u.scale(self.symbols.mass));
        s.a.mul(&u.derivative(2)).add(&s.b.mul(&u.derivative(1))).add(&s.lambda.mul(&jump))
    }

    /// `u ↦ T̃*(m u)`, whose kernel is the constants.
    pub fn weighted_adjoint(&self, m: &PeriodicField) -> DMatrix<f64> {
        scale_cols(&self.adjoint(), m.values())
    }

    fn h(&self) -> f64 {
        self.grid().h()
    }

    fn residual(&self, a: &DMatrix<f64>, x: &PeriodicField, rhs: &PeriodicField) -> f64 {
        linalg::norm_l2_h(&(a * to_vector(x) - to_vector(rhs)), self.h())
    }

    pub fn invariant_density(&self, diag: &mut Diagnostics) -> Result<PeriodicField> {
        let adj = self.adjoint();
        let sol = normalized_null_vector(&adj, self.h())?;
        let m = to_field(self.grid(), &sol.vector)?;
        let rel = sol.residual / sol.operator_norm;
        diag.residuals.insert("invariant density (relative)".into(), rel);
        if !(rel <= 1e-10) {
            return Err(Error::Residual { equation: "invariant density", value: rel, tolerance: 1e-10 });
        }
        if m.min() <= 0.0 {
            return Err(Error::Assumption {
                assumption: "invariant density positive",
                detail: format!("min m = {:e}", m.min()),
            });
        }
        Ok(m)
    }

    /// Second route to `m`: inverse iteration on the adjoint shifted slightly off zero.
    pub fn invariant_density_by_inverse_iteration(&self) -> Result<PeriodicField> {
        let n = self.grid().n();
        let scale = self.matrix.norm() / n as f64;
        let start = DVector::from_element(n, 1.0);
        let v = linalg::inverse_power_iteration(&self.adjoint(), 1e-7 * scale, &start, 4)?;
        let total = v.sum() * self.h();
        to_field(self.grid(), &(v / total))
    }

    pub fn centering(&self, m: &PeriodicField) -> f64 {
        self.set.b.inner(m)
    }

    pub fn corrector(&self, m: &PeriodicField, diag: &mut Diagnostics) -> Result<PeriodicField> {
        diag.check_solvability("corrector (integral of b m)", self.centering(m))?;
        let h = self.h();
        let mv = to_vector(m);
        let rhs = -to_vector(&self.set.b);
        let (x, _) = solve_bordered(&self.matrix, &mv, &(&mv * h), &rhs, 0.0)?;
        let chi = to_field(self.grid(), &x)?;
        diag.check_residual("corrector", self.residual(&self.matrix, &chi, &self.set.b.scale(-1.0)))?;
        Ok(chi)
    }

    /// Effective diffusivity from the corrector:
    /// `∫a m (χ' + 1)² + ½ ∫λ m ∫c(z)[z + χ(y + z) − χ(y)]² dz dy`.
    pub fn effective_diffusivity(&self, m: &PeriodicField, chi: &PeriodicField) -> f64 {
        let s = &self.set;
        let sym = &self.symbols;
        let grad = chi.derivative(1).offset(1.0);
        let diffusion = s.a.mul(m).inner(&grad.mul(&grad));
        let conv = sym.convolve(chi);
        let conv_sq = sym.convolve(&chi.mul(chi));
        let forward = sym.first_forward(chi);
        let mut inner = Vec::with_capacity(chi.n());
        for j in 0..chi.n() {
            let c = chi.values()[j];
            inner.push(
                sym.second_moment + 2.0 * forward.values()[j] + conv_sq.values()[j] - 2.0 * c * conv.values()[j]
                    + sym.mass * c * c,
            );
        }
        let inner = PeriodicField::from_vec_unchecked(self.grid(), inner);
        diffusion + 0.5 * s.lambda.mul(m).inner(&inner)
    }

    /// `l = ∫z c(z)(mλ)(y − z)dz + b m − 2(a m)'`.
    pub fn first_order_source(&self, m: &PeriodicField) -> PeriodicField {
        let s = &self.set;
        self.symbols.first_backward(&m.mul(&s.lambda)).add(&s.b.mul(m)).sub(&s.a.mul(m).derivative(1).scale(2.0))
    }

    pub fn first_order_corrector(&self, m: &PeriodicField, diag: &mut Diagnostics) -> Result<(PeriodicField, f64)> {
        let l = self.first_order_source(m);
        let total = l.integral();
        diag.check_solvability("first-order corrector (integral of l)", total)?;
        let h1 = self.solve_weighted_adjoint(m, &l)?;
        diag.check_residual("first-order corrector", self.residual(&self.weighted_adjoint(m), &h1, &l))?;
        Ok((h1, total))
    }

    /// `r = ½∫z²c(λm)(y − z) − ∫z c(λm h₁)(y − z) + a m + 2(a m h₁)' − b m h₁`; the
    /// second-order corrector solves `T̃*(m h₂) = Q − r` with `Q = ∫r`.
    pub fn second_order_source(&self, m: &PeriodicField, h1: &PeriodicField) -> PeriodicField {
        let s = &self.set;
        let lm = s.lambda.mul(m);
        let amh = s.a.mul(m).mul(h1);
        self.symbols
            .second_backward(&lm)
            .scale(0.5)
            .sub(&self.symbols.first_backward(&lm.mul(h1)))
            .add(&s.a.mul(m))
            .add(&amh.derivative(1).scale(2.0))
            .sub(&s.b.mul(m).mul(h1))
    }

    pub fn second_order_corrector(
        &self,
        m: &PeriodicField,
        h1: &PeriodicField,
        diag: &mut Diagnostics,
    ) -> Result<(PeriodicField, f64)> {
        let r = self.second_order_source(m, h1);
        let q_alt = r.integral();
        let rhs = r.scale(-1.0).offset(q_alt);
        diag.check_solvability("second-order corrector", rhs.integral())?;
        let h2 = self.solve_weighted_adjoint(m, &rhs)?;
        diag.check_residual("second-order corrector", self.residual(&self.weighted_adjoint(m), &h2, &rhs))?;
        Ok((h2, q_alt))
    }

    /// Mean-zero solution of `T̃*(m h) = rhs`.
    fn solve_weighted_adjoint(&self, m: &PeriodicField, rhs: &PeriodicField) -> Result<PeriodicField> {
        let n = self.grid().n();
        let ones = DVector::from_element(n, 1.0);
        let (x, _) = solve_bordered(&self.weighted_adjoint(m), &ones, &(&ones * self.h()), &to_vector(rhs), 0.0)?;
        to_field(self.grid(), &x)
    }

    /// Generator of the stationary time reversal, `diag(1/m) T̃* diag(m)`.
    pub fn reversed_matrix(&self, m: &PeriodicField) -> DMatrix<f64> {
        let inv: Vec<f64> = m.values().iter().map(|v| 1.0 / v).collect();
        scale_rows(&self.weighted_adjoint(m), &inv)
    }

    /// Corrector of the reversed generator and the diffusivity it produces.
    pub fn filtering_corrector(&self, m: &PeriodicField, diag: &mut Diagnostics) -> Result<(PeriodicField, f64)> {
        let l = self.first_order_source(m);
        diag.check_solvability("filtering corrector (integral of l)", l.integral())?;
        let rhs = l.zip_map(m, |a, b| a / b);
        let mat = self.reversed_matrix(m);
        let mv = to_vector(m);
        let (x, _) = solve_bordered(&mat, &mv, &(&mv * self.h()), &to_vector(&rhs), 0.0)?;
        let chi1 = to_field(self.grid(), &x)?;
        diag.check_residual("filtering corrector", self.residual(&mat, &chi1, &rhs))?;
        let q1 = self.effective_diffusivity(m, &chi1);
        Ok((chi1, q1))
    }

    /// Fits the shift in the coercivity estimate for `a[u,u] = −⟨T̃*(m u), u⟩` and checks it
    /// on `samples` random fields.
    pub fn coercivity(&self, m: &PeriodicField, samples: usize, seed: u64) -> Result<CoercivityWitness> {
        let n = self.grid().n();
        let alpha = self.set.kappa * m.min();
        let form = -self.weighted_adjoint(m);
        let sym = (&form + form.transpose()) * 0.5;
        let d = &self.first_derivative;
        let target = (DMatrix::identity(n, n) + d.transpose() * d) * (0.5 * alpha) - &sym;
        let top = SymmetricEigen::new(target).eigenvalues.max();
        let mu = top + 1e-9 * (1.0 + top.abs());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.h();
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let du = d * &u;
            let lhs = 0.5 * alpha * h * (u.norm_squared() + du.norm_squared());
            let rhs = h * u.dot(&(&form * &u)) + mu * h * u.norm_squared();
            worst = worst.min((rhs - lhs) / (h * u.norm_squared()));
        }
        if worst < 0.0 {
            return Err(Error::Assumption {
                assumption: "coercivity",
                detail: format!("estimate violated by {worst:e} with mu = {mu}"),
            });
        }
        Ok(CoercivityWitness { alpha, mu, samples, worst_margin: worst })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoercivityWitness {
    pub alpha: f64,
    pub mu: f64,
    pub samples: usize,
    /// Smallest `(a[u,u] + μ‖u‖² − α/2‖u‖²_{H¹}) / ‖u‖²` over the samples.
    pub worst_margin: f64,
}

pub fn assemble_torus_generator_i(set: &CoefficientSetI) -> Result<TorusGeneratorI> {
    let grid = set.grid();
    let n = grid.n();
    let symbols = KernelSymbols::new(&set.kernel, grid);
    let d1 = circulant(n, 1.0, derivative_symbol(1));
    let d2 = circulant(n, 1.0, derivative_symbol(2));
    let conv = symbols.convolution_matrix() - DMatrix::identity(n, n) * symbols.mass;
    let matrix =
        scale_rows(&d2, set.a.values()) + scale_rows(&d1, set.b.values()) + scale_rows(&conv, set.lambda.values());
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("torus generator".into()));
    }
    Ok(TorusGeneratorI { set: set.clone(), symbols, matrix, first_derivative: d1 })
}

pub fn solve_invariant_density_i(set: &CoefficientSetI) -> Result<PeriodicField> {
    assemble_torus_generator_i(set)?.invariant_density(&mut Diagnostics::default())
}

/// `∫b m`; the set is admissible when this is at most `1e-8` in magnitude.
pub fn check_centering_i(set: &CoefficientSetI, m: &PeriodicField) -> f64 {
    set.b.inner(m)
}

pub fn solve_corrector_chi(set: &CoefficientSetI, m: &PeriodicField) -> Result<PeriodicField> {
    assemble_torus_generator_i(set)?.corrector(m, &mut Diagnostics::default())
}

pub fn compute_q(set: &CoefficientSetI, m: &PeriodicField, chi: &PeriodicField) -> Result<f64> {
    Ok(assemble_torus_generator_i(set)?.effective_diffusivity(m, chi))
}

pub fn solve_h1(set: &CoefficientSetI, m: &PeriodicField) -> Result<(PeriodicField, f64)> {
    assemble_torus_generator_i(set)?.first_order_corrector(m, &mut Diagnostics::default())
}

pub fn solve_h2(set: &CoefficientSetI, m: &PeriodicField, h1: &PeriodicField) -> Result<(PeriodicField, f64)> {
    assemble_torus_generator_i(set)?.second_order_corrector(m, h1, &mut Diagnostics::default())
}

pub fn zakai_cell_i(set: &CoefficientSetI, m: &PeriodicField) -> Result<(PeriodicField, f64)> {
    assemble_torus_generator_i(set)?.filtering_corrector(m, &mut Diagnostics::default())
}

/// Replaces `b` by `b − c` with the shift `c` chosen so the centering condition holds for the
/// invariant density of the shifted set.
pub fn center_drift_i(set: &CoefficientSetI) -> Result<CoefficientSetI> {
    let raw = set.b.clone();
    let c = centering_shift(
        |c| {
            let shifted = set.with_b(raw.offset(-c));
            let m = solve_invariant_density_i(&shifted)?;
            Ok(raw.inner(&m))
        },
        1e-14,
    )?;
    Ok(set.with_b(raw.offset(-c)))
}

#[derive(Clone, Debug)]
pub struct CellSolutionI {
    pub m: PeriodicField,
    pub chi: PeriodicField,
    pub h1: PeriodicField,
    pub h2: PeriodicField,
    pub chi1: PeriodicField,
    pub q: f64,
    pub q_alt: f64,
    pub q1: f64,
    pub sigma_bar: f64,
    /// `∫σ² m`
    pub sigma_sq_bar: f64,
    pub solvability_l: f64,
    pub centering: f64,
    pub kernel_mass: f64,
    pub kernel_second_moment: f64,
    pub diagnostics: Diagnostics,
}

/// All Part I cell problems for one coefficient set.
pub fn solve_cell_i(set: &CoefficientSetI) -> Result<CellSolutionI> {
    let gen = assemble_torus_generator_i(set)?;
    let mut diag = Diagnostics::default();
    let m = gen.invariant_density(&mut diag)?;
    let centering = gen.centering(&m);
    if centering.abs() > super::SOLVABILITY_TOL {
        return Err(Error::Assumption {
            assumption: "v",
            detail: format!("centering integral of b m is {centering:e}"),
        });
    }
    let chi = gen.corrector(&m, &mut diag)?;
    let q = gen.effective_diffusivity(&m, &chi);
    if !(q > 0.0) {
        return Err(Error::NonFinite(format!("effective diffusivity {q} is not positive")));
    }
    let (h1, solvability_l) = gen.first_order_corrector(&m, &mut diag)?;
    let (h2, q_alt) = gen.second_order_corrector(&m, &h1, &mut diag)?;
    let (chi1, q1) = gen.filtering_corrector(&m, &mut diag)?;
    Ok(CellSolutionI {
        sigma_bar: set.sigma.inner(&m),
        sigma_sq_bar: set.sigma.mul(&set.sigma).inner(&m),
        kernel_mass: gen.symbols.mass,
        kernel_second_moment: gen.symbols.second_moment,
        m,
        chi,
        h1,
        h2,
        chi1,
        q,
        q_alt,
        q1,
        solvability_l,
        centering,
        diagnostics: diag,
    })
}
