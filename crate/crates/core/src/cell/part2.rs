//! α-stable cell problems.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::linalg::{self, circulant, normalized_null_vector, scale_cols, scale_rows, solve_bordered};
use super::{centering_shift, to_field, to_vector, Diagnostics, SOLVABILITY_TOL};
use crate::coefficients::CoefficientSetII;
use crate::error::{Error, Result};
use crate::spectral::{derivative_symbol, fractional_symbol, PeriodicField, TorusGrid};

/// Dense discretization of `−δ^α (−Δ)^{α/2} u + d u'` on the torus grid.
#[derive(Clone, Debug)]
pub struct TorusGeneratorII {
    set: CoefficientSetII,
    matrix: DMatrix<f64>,
}

impl TorusGeneratorII {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }

    pub fn set(&self) -> &CoefficientSetII {
        &self.set
    }

    pub fn grid(&self) -> TorusGrid {
        self.set.grid()
    }

    fn h(&self) -> f64 {
        self.grid().h()
    }

    pub fn apply(&self, u: &PeriodicField) -> PeriodicField {
        let frac = u.apply_multiplier(fractional_symbol(self.set.alpha));
        self.set.d.mul(&u.derivative(1)).sub(&self.set.delta_alpha().mul(&frac))
    }

    fn residual(&self, a: &DMatrix<f64>, x: &PeriodicField, rhs: &PeriodicField) -> f64 {
        linalg::norm_l2_h(&(a * to_vector(x) - to_vector(rhs)), self.h())
    }

    pub fn invariant_density(&self, diag: &mut Diagnostics) -> Result<PeriodicField> {
        let sol = normalized_null_vector(&self.adjoint(), self.h())?;
        let m1 = to_field(self.grid(), &sol.vector)?;
        let rel = sol.residual / sol.operator_norm;
        diag.residuals.insert("invariant density (relative)".into(), rel);
        if !(rel <= 1e-10) {
            return Err(Error::Residual { equation: "invariant density", value: rel, tolerance: 1e-10 });
        }
        if m1.min() <= 0.0 {
            return Err(Error::Assumption {
                assumption: "invariant density positive",
                detail: format!("min m1 = {:e}", m1.min()),
            });
        }
        Ok(m1)
    }

    pub fn centering(&self, m1: &PeriodicField) -> f64 {
        self.set.d.inner(m1)
    }

    /// `L̃*(m₁ h₃) = d m₁` normalized by `∫h₃ = 1`.
    pub fn drift_corrector(&self, m1: &PeriodicField, diag: &mut Diagnostics) -> Result<PeriodicField> {
        diag.check_solvability("drift corrector (integral of d m1)", self.centering(m1))?;
        let n = self.grid().n();
        let a = scale_cols(&self.adjoint(), m1.values());
        let rhs = self.set.d.mul(m1);
        let ones = DVector::from_element(n, 1.0);
        let (x, _) = solve_bordered(&a, &ones, &(&ones * self.h()), &to_vector(&rhs), 1.0)?;
        let h3 = to_field(self.grid(), &x)?;
        diag.check_residual("drift corrector", self.residual(&a, &h3, &rhs))?;
        Ok(h3)
    }

    /// Solves `L̃u + source = 0` with `∫u m₁ = 0`. When `∫source m₁` does not vanish the
    /// equation has no solution; the component along `m₁` is then dropped and a warning is
    /// recorded instead of an error.
    pub fn centered_solution(
        &self,
        name: &'static str,
        source: &PeriodicField,
        m1: &PeriodicField,
        diag: &mut Diagnostics,
    ) -> Result<PeriodicField> {
        let defect = source.inner(m1);
        diag.solvability.insert(name.to_string(), defect);
        let mv = to_vector(m1);
        let rhs = -to_vector(source);
        let (x, mu) = solve_bordered(&self.matrix, &mv, &(&mv * self.h()), &rhs, 0.0)?;
        let u = to_field(self.grid(), &x)?;
        if defect.abs() > SOLVABILITY_TOL {
            diag.warnings.push(format!(
                "{name}: integral of the source against m1 is {defect:e}; solved in the least-squares sense"
            ));
            let projected = source.add(&m1.scale(mu));
            diag.check_residual(name, self.residual(&self.matrix, &u, &projected.scale(-1.0)))?;
        } else {
            diag.check_residual(name, self.residual(&self.matrix, &u, &source.scale(-1.0)))?;
        }
        Ok(u)
    }
}

pub fn assemble_torus_generator_ii(set: &CoefficientSetII) -> Result<TorusGeneratorII> {
    let n = set.grid().n();
    let frac = circulant(n, 1.0, fractional_symbol(set.alpha));
    let d1 = circulant(n, 1.0, derivative_symbol(1));
    let matrix = scale_rows(&d1, set.d.values()) - scale_rows(&frac, set.delta_alpha().values());
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("torus generator".into()));
    }
    Ok(TorusGeneratorII { set: set.clone(), matrix })
}

pub fn solve_invariant_density_ii(set: &CoefficientSetII) -> Result<PeriodicField> {
    assemble_torus_generator_ii(set)?.invariant_density(&mut Diagnostics::default())
}

pub fn check_centering_ii(set: &CoefficientSetII, m1: &PeriodicField) -> f64 {
    set.d.inner(m1)
}

pub fn solve_h3(set: &CoefficientSetII, m1: &PeriodicField) -> Result<PeriodicField> {
    assemble_torus_generator_ii(set)?.drift_corrector(m1, &mut Diagnostics::default())
}

/// `L̃e₁ + e = 0`, `∫e₁ m₁ = 0`. Warnings about an unsolvable source land in `diag`.
pub fn solve_e1(set: &CoefficientSetII, diag: &mut Diagnostics) -> Result<PeriodicField> {
    let gen = assemble_torus_generator_ii(set)?;
    let m1 = gen.invariant_density(diag)?;
    gen.centered_solution("e1", &set.e, &m1, diag)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveCoefficientsII {
    pub delta_bar_alpha: f64,
    pub g_bar: f64,
    pub f_bar: f64,
    pub sigma_bar: f64,
    /// `∫σ² m₁`
    pub sigma_sq_bar: f64,
}

pub fn effective_coefficients_ii(set: &CoefficientSetII, m1: &PeriodicField) -> EffectiveCoefficientsII {
    EffectiveCoefficientsII {
        delta_bar_alpha: set.delta_alpha().inner(m1),
        g_bar: set.g.inner(m1),
        f_bar: set.f.inner(m1),
        sigma_bar: set.sigma.inner(m1),
        sigma_sq_bar: set.sigma.mul(&set.sigma).inner(m1),
    }
}

/// Part II analog of [`center_drift_i`](super::center_drift_i), acting on `d`.
pub fn center_drift_ii(set: &CoefficientSetII) -> Result<CoefficientSetII> {
    let raw = set.d.clone();
    let c = centering_shift(
        |c| {
            let m1 = solve_invariant_density_ii(&set.with_d(raw.offset(-c)))?;
            Ok(raw.inner(&m1))
        },
        1e-14,
    )?;
    Ok(set.with_d(raw.offset(-c)))
}

#[derive(Clone, Debug)]
pub struct CellSolutionII {
    pub m1: PeriodicField,
    pub h3: PeriodicField,
    pub e1: Option<PeriodicField>,
    /// Solution of `L̃d₁ + d = 0`; computed as a diagnostic only.
    pub d1: Option<PeriodicField>,
    pub effective: EffectiveCoefficientsII,
    pub centering: f64,
    pub diagnostics: Diagnostics,
}

pub fn solve_cell_ii(set: &CoefficientSetII) -> Result<CellSolutionII> {
    let gen = assemble_torus_generator_ii(set)?;
    let mut diag = Diagnostics::default();
    let m1 = gen.invariant_density(&mut diag)?;
    let centering = gen.centering(&m1);
    if centering.abs() > SOLVABILITY_TOL {
        return Err(Error::Assumption {
            assumption: "b",
            detail: format!("centering integral of d m1 is {centering:e}"),
        });
    }
    let h3 = gen.drift_corrector(&m1, &mut diag)?;
    let e1 = gen.centered_solution("e1", &set.e, &m1, &mut diag)?;
    let d1 = gen.centered_solution("d1", &set.d, &m1, &mut diag)?;
    Ok(CellSolutionII {
        effective: effective_coefficients_ii(set, &m1),
        m1,
        h3,
        e1: Some(e1),
        d1: Some(d1),
        centering,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn set_with(
        n: usize,
        delta: impl Fn(f64) -> f64,
        d: impl Fn(f64) -> f64,
        e: impl Fn(f64) -> f64,
        alpha: f64,
    ) -> CoefficientSetII {
        let g = TorusGrid::new(n).unwrap();
        CoefficientSetII::new(
            PeriodicField::from_fn(g, delta),
            PeriodicField::from_fn(g, d),
            PeriodicField::from_fn(g, |y| 0.1 * (2.0 * PI * y).cos()),
            PeriodicField::from_fn(g, e),
            PeriodicField::from_fn(g, |y| 0.2 + 0.1 * (2.0 * PI * y).sin()),
            PeriodicField::from_fn(g, |y| 0.5 + 0.2 * (2.0 * PI * y).cos()),
            alpha,
        )
        .unwrap()
    }

    fn stable(n: usize) -> CoefficientSetII {
        let s = set_with(n, |y| 1.0 + 0.4 * (2.0 * PI * y).cos(), |y| 0.5 * (2.0 * PI * y).sin(), |_| 0.0, 1.5);
        center_drift_ii(&s).unwrap()
    }

    #[test]
    fn eigenfunction_and_constants() {
        let s = set_with(32, |_| 1.0, |_| 0.0, |_| 0.0, 1.3);
        let gen = assemble_torus_generator_ii(&s).unwrap();
        assert!((gen.matrix() * DVector::from_element(32, 1.0)).amax() < 1e-10);
        let u = PeriodicField::from_fn(s.grid(), |y| (2.0 * PI * y).cos());
        let lu = gen.apply(&u);
        let want = u.scale(-(2.0 * PI).powf(1.3));
        assert!(lu.sub(&want).max_abs() < 1e-10);
        let dense = gen.matrix() * to_vector(&u);
        assert!(dense.iter().zip(want.values()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn zero_drift_gives_uniform_density_and_constant_h3() {
        let s = set_with(32, |_| 1.2, |_| 0.0, |_| 0.0, 1.5);
        let sol = solve_cell_ii(&s).unwrap();
        assert!(sol.m1.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(sol.h3.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(sol.e1.unwrap().max_abs() < 1e-14);
        // variable δ without drift: δ^α m₁ is constant
        let s = set_with(32, |y| 1.0 + 0.3 * (2.0 * PI * y).sin(), |_| 0.0, |_| 0.0, 1.5);
        let sol = solve_cell_ii(&s).unwrap();
        let weighted = sol.m1.mul(&s.delta_alpha());
        assert!(weighted.offset(-weighted.values()[0]).max_abs() < 1e-12);
        assert!(sol.h3.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_mode_e1() {
        let alpha = 1.5;
        let s = set_with(32, |_| 1.0, |_| 0.0, |y| (2.0 * PI * y).sin(), alpha);
        let mut diag = Diagnostics::default();
        let e1 = solve_e1(&s, &mut diag).unwrap();
        let want = PeriodicField::from_fn(s.grid(), |y| (2.0 * PI * y).sin() / (2.0 * PI).powf(alpha));
        assert!(e1.sub(&want).max_abs() < 1e-12);
        assert!(diag.warnings.is_empty());
    }

    #[test]
    fn unsolvable_e1_warns() {
        let s = set_with(32, |_| 1.0, |_| 0.0, |y| 1.0 + (2.0 * PI * y).sin(), 1.5);
        let mut diag = Diagnostics::default();
        let e1 = solve_e1(&s, &mut diag).unwrap();
        assert_eq!(diag.warnings.len(), 1);
        assert!(e1.integral().abs() < 1e-12);
    }

    #[test]
    fn stable_fixture_invariants_and_refinement() {
        let c = solve_cell_ii(&stable(64)).unwrap();
        let f = solve_cell_ii(&stable(128)).unwrap();
        assert!(c.m1.min() > 0.0 && (c.m1.integral() - 1.0).abs() < 1e-12);
        assert!((c.h3.integral() - 1.0).abs() < 1e-10);
        assert!(c.effective.delta_bar_alpha > 0.0);
        let g = c.m1.grid();
        assert!(f.m1.resample(g).sub(&c.m1).max_abs() < 1e-9);
        assert!(f.h3.resample(g).sub(&c.h3).max_abs() < 1e-9);
        assert!((f.effective.delta_bar_alpha - c.effective.delta_bar_alpha).abs() < 1e-10);
        assert!((f.effective.sigma_bar - c.effective.sigma_bar).abs() < 1e-10);
        assert!(c.centering.abs() < 1e-10);
    }

    #[test]
    fn constant_coefficients_average_to_themselves() {
        let s = set_with(16, |_| 1.3, |_| 0.0, |_| 0.0, 0.7);
        let m1 = solve_invariant_density_ii(&s).unwrap();
        let e = effective_coefficients_ii(&s, &m1);
        assert!((e.delta_bar_alpha - 1.3f64.powf(0.7)).abs() < 1e-12);
        let base = stable(32);
        let s1 = CoefficientSetII { sigma: PeriodicField::constant(base.grid(), 1.0), ..base };
        let m = solve_invariant_density_ii(&s1).unwrap();
        assert!((effective_coefficients_ii(&s1, &m).sigma_bar - 1.0).abs() < 1e-12);
    }
}
