//! Coefficient bundles for the jump-diffusion (Part I) and α-stable (Part II) models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_moments, IntegrableKernel, KernelMoments};
use crate::spectral::{check_alpha, PeriodicField, TorusGrid};

/// Scale parameter `ε = 1/K` with integer `K ≥ 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Epsilon {
    reciprocal: u32,
}

impl Epsilon {
    pub fn from_reciprocal(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::param("eps", format!("1/eps must be an integer >= 2, got {k}")));
        }
        Ok(Self { reciprocal: k })
    }

    /// Accepts `value` only if its reciprocal is an integer (to 1e-9).
    pub fn from_value(value: f64) -> Result<Self> {
        let k = (1.0 / value).round();
        if !(value > 0.0) || ((1.0 / value) - k).abs() > 1e-9 || k > u32::MAX as f64 {
            return Err(Error::param("eps", format!("{value} is not the reciprocal of an integer")));
        }
        Self::from_reciprocal(k as u32)
    }

    pub fn value(&self) -> f64 {
        1.0 / self.reciprocal as f64
    }

    pub fn reciprocal(&self) -> u32 {
        self.reciprocal
    }

    pub fn halved(&self) -> Self {
        Self { reciprocal: 2 * self.reciprocal }
    }
}

/// Trigonometric polynomial `mean + Σ_k cos_k cos(2πky) + sin_k sin(2πky)`, `k = 1, 2, …`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierProfile {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierProfile {
    pub fn constant(c: f64) -> Self {
        Self { mean: c, ..Default::default() }
    }

    pub fn evaluate(&self, y: f64) -> f64 {
        let mut v = self.mean;
        for (k, c) in self.cos.iter().enumerate() {
            v += c * (2.0 * PI * (k + 1) as f64 * y).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            v += s * (2.0 * PI * (k + 1) as f64 * y).sin();
        }
        v
    }

    pub fn sample(&self, grid: TorusGrid) -> PeriodicField {
        PeriodicField::from_fn(grid, |y| self.evaluate(y))
    }

    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }
}

/// Pass/fail entry of a validation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub assumption: &'static str,
    pub description: String,
    pub passed: bool,
    pub measured: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, assumption: &'static str, description: impl Into<String>, passed: bool, measured: f64) {
        self.checks.push(Check { assumption, description: description.into(), passed, measured });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// First failure as an error naming the assumption.
    pub fn into_result(self) -> Result<()> {
        match self.failures().next() {
            None => Ok(()),
            Some(c) => Err(Error::Assumption {
                assumption: c.assumption,
                detail: format!("{} (measured {:e})", c.description, c.measured),
            }),
        }
    }
}

const DECAY_TOL: f64 = 1e-8;

/// Largest spectral coefficient magnitude at index `|k| ≥ n/4`.
pub fn spectral_tail(f: &PeriodicField) -> f64 {
    let n = f.n();
    let c = f.coefficients();
    (n / 4..=n - n / 4).map(|j| c[j].norm()).fold(0.0, f64::max)
}

fn decay_check(report: &mut ValidationReport, assumption: &'static str, name: &str, f: &PeriodicField) {
    let tail = spectral_tail(f);
    report.push(
        assumption,
        format!("spectral coefficients of {name} below {DECAY_TOL:e} from index n/4"),
        tail <= DECAY_TOL,
        tail,
    );
}

#[derive(Clone, Debug)]
pub struct CoefficientSetI {
    pub a: PeriodicField,
    pub b: PeriodicField,
    pub lambda: PeriodicField,
    pub sigma: PeriodicField,
    pub kernel: IntegrableKernel,
    pub kappa: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl CoefficientSetI {
    /// Bundles the fields and records the measured bounds `kappa`, `alpha1`, `alpha2`.
    pub fn new(
        a: PeriodicField,
        b: PeriodicField,
        lambda: PeriodicField,
        sigma: PeriodicField,
        kernel: IntegrableKernel,
    ) -> Result<Self> {
        let grid = a.grid();
        for (name, f) in [("b", &b), ("lambda", &lambda), ("sigma", &sigma)] {
            if f.grid() != grid {
                return Err(Error::Grid(format!("{name} sampled on n = {}, a on n = {}", f.n(), grid.n())));
            }
        }
        let kappa = a.min().min(1.0 / a.max());
        Ok(Self { kappa, alpha1: lambda.min(), alpha2: lambda.max(), a, b, lambda, sigma, kernel })
    }

    pub fn grid(&self) -> TorusGrid {
        self.a.grid()
    }

    pub fn with_b(&self, b: PeriodicField) -> Self {
        Self { b, ..self.clone() }
    }

    pub fn with_sigma(&self, sigma: PeriodicField) -> Self {
        Self { sigma, ..self.clone() }
    }

    /// Same set with every field multiplied pointwise: `a, λ` by `s_al`, `b` by `s_b`.
    pub fn scaled(&self, s_al: f64, s_b: f64) -> Result<Self> {
        Self::new(self.a.scale(s_al), self.b.scale(s_b), self.lambda.scale(s_al), self.sigma.clone(), self.kernel)
    }

    pub fn moments(&self) -> Result<KernelMoments> {
        kernel_moments(&self.kernel)
    }
}

/// Checks assumptions (i)–(iv); centering (v) needs the invariant density and lives in the cell solver.
pub fn validate_i(set: &CoefficientSetI) -> ValidationReport {
    let mut r = ValidationReport::default();
    decay_check(&mut r, "i", "a", &set.a);
    decay_check(&mut r, "i", "b", &set.b);
    decay_check(&mut r, "i", "sigma", &set.sigma);
    let (amin, amax) = (set.a.min(), set.a.max());
    r.push(
        "ii",
        format!("ellipticity kappa <= a <= 1/kappa (min a = {amin:.6}, max a = {amax:.6})"),
        set.kappa > 0.0 && amin > 0.0,
        set.kappa,
    );
    r.push(
        "iii",
        format!("0 < alpha1 <= lambda <= alpha2 (alpha1 = {:.6}, alpha2 = {:.6})", set.alpha1, set.alpha2),
        set.alpha1 > 0.0 && set.alpha2.is_finite(),
        set.alpha1,
    );
    let k = &set.kernel;
    let asym = (0..=200)
        .map(|i| {
            let z = k.radius * (i as f64 / 200.0) * 1.1;
            (k.evaluate(z) - k.evaluate(-z)).abs()
        })
        .fold(0.0, f64::max);
    r.push("iv", "kernel symmetry c(-z) = c(z)", asym <= 1e-12, asym);
    let neg = (0..=200).map(|i| k.evaluate(k.radius * (2.0 * i as f64 / 200.0 - 1.0))).fold(0.0, f64::min);
    r.push("iv", "kernel nonnegativity", neg >= 0.0, neg);
    match kernel_moments(k) {
        Ok(m) => {
            r.push("iv", format!("kernel mass a1 = {:.12} positive", m.mass), m.mass > 0.0, m.mass);
            r.push("iv", format!("finite second moment s2 = {:.12}", m.second), m.second.is_finite(), m.second);
        }
        Err(e) => r.push("iv", format!("kernel moments: {e}"), false, f64::NAN),
    }
    r.push(
        "iv",
        format!("tail mass beyond R = {:.6} below {:e}", k.radius, k.tail_tol),
        k.tail_mass() <= k.tail_tol,
        k.tail_mass(),
    );
    r
}

#[derive(Clone, Debug)]
pub struct CoefficientSetII {
    pub delta: PeriodicField,
    pub d: PeriodicField,
    pub g: PeriodicField,
    pub e: PeriodicField,
    pub f: PeriodicField,
    pub sigma: PeriodicField,
    pub alpha: f64,
}

impl CoefficientSetII {
    pub fn new(
        delta: PeriodicField,
        d: PeriodicField,
        g: PeriodicField,
        e: PeriodicField,
        f: PeriodicField,
        sigma: PeriodicField,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let grid = delta.grid();
        for (name, fld) in [("d", &d), ("g", &g), ("e", &e), ("f", &f), ("sigma", &sigma)] {
            if fld.grid() != grid {
                return Err(Error::Grid(format!("{name} sampled on n = {}, delta on n = {}", fld.n(), grid.n())));
            }
        }
        Ok(Self { delta, d, g, e, f, sigma, alpha })
    }

    pub fn grid(&self) -> TorusGrid {
        self.delta.grid()
    }

    /// `δ^α` pointwise.
    pub fn delta_alpha(&self) -> PeriodicField {
        let a = self.alpha;
        self.delta.map(|v| v.powf(a))
    }

    pub fn with_d(&self, d: PeriodicField) -> Self {
        Self { d, ..self.clone() }
    }
}

/// Part II analog of [`validate_i`]: smoothness (a), positivity of δ, range of α.
pub fn validate_ii(set: &CoefficientSetII) -> ValidationReport {
    let mut r = ValidationReport::default();
    for (name, f) in
        [("delta", &set.delta), ("d", &set.d), ("g", &set.g), ("e", &set.e), ("f", &set.f), ("sigma", &set.sigma)]
    {
        decay_check(&mut r, "a", name, f);
    }
    let dmin = set.delta.min();
    r.push("a", format!("delta positive (min delta = {dmin:.6})"), dmin > 0.0, dmin);
    r.push(
        "a",
        format!("stability index alpha = {} in (0, 2)", set.alpha),
        set.alpha > 0.0 && set.alpha < 2.0,
        set.alpha,
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(32).unwrap()
    }

    fn const_set(a: f64) -> CoefficientSetI {
        let g = grid();
        CoefficientSetI::new(
            PeriodicField::constant(g, a),
            PeriodicField::constant(g, 0.0),
            PeriodicField::constant(g, 2.0),
            PeriodicField::constant(g, 1.0),
            IntegrableKernel::uniform(1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn epsilon_rules() {
        assert!(Epsilon::from_reciprocal(1).is_err());
        assert_eq!(Epsilon::from_value(0.125).unwrap().reciprocal(), 8);
        assert!(Epsilon::from_value(0.3).is_err());
        assert_eq!(Epsilon::from_reciprocal(4).unwrap().halved().value(), 0.125);
    }

    #[test]
    fn constant_set_passes() {
        let r = validate_i(&const_set(1.0));
        assert!(r.passed(), "{r:?}");
        assert!(r.into_result().is_ok());
    }

    #[test]
    fn degenerate_diffusion_fails_ellipticity() {
        let g = grid();
        let mut set = const_set(1.0);
        set = CoefficientSetI::new(
            PeriodicField::from_fn(g, |y| 1.0 - (2.0 * PI * y).cos()),
            set.b,
            set.lambda,
            set.sigma,
            set.kernel,
        )
        .unwrap();
        let r = validate_i(&set);
        assert!(!r.passed());
        let err = r.into_result().unwrap_err().to_string();
        assert!(err.contains("assumption (ii)"), "{err}");
    }

    #[test]
    fn rough_field_fails_decay() {
        let g = grid();
        let set = const_set(1.0);
        let b = PeriodicField::from_fn(g, |y| if y < 0.5 { 1.0 } else { -1.0 });
        let r = validate_i(&set.with_b(b));
        assert!(r.failures().any(|c| c.assumption == "i"));
    }

    #[test]
    fn profile_evaluation() {
        let p = FourierProfile { mean: 1.0, cos: vec![0.0, 0.5], sin: vec![0.25] };
        let y = 0.3;
        let exact = 1.0 + 0.5 * (4.0 * PI * y).cos() + 0.25 * (2.0 * PI * y).sin();
        assert!((p.evaluate(y) - exact).abs() < 1e-15);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn part_two_validation() {
        let g = grid();
        let z = PeriodicField::constant(g, 0.0);
        let set = CoefficientSetII::new(
            PeriodicField::from_fn(g, |y| 1.0 + 0.4 * (2.0 * PI * y).cos()),
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            PeriodicField::constant(g, 1.0),
            1.5,
        )
        .unwrap();
        assert!(validate_ii(&set).passed());
        assert!(CoefficientSetII::new(set.delta.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), 2.5)
            .is_err());
        let bad = CoefficientSetII { delta: PeriodicField::constant(g, -1.0), ..set };
        assert!(!validate_ii(&bad).passed());
    }
}
