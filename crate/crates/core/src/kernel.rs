//! Symmetric integrable jump kernels and the discrete measure used to integrate against them.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::coefficients::Epsilon;
use crate::error::{Error, Result};
use crate::quadrature::{self, AdaptiveOptions};
use crate::spectral::{self, TorusGrid};

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
const MAX_PANEL: f64 = 1.0 / 64.0;
const GL_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelShape {
    /// Box of half-width `half_width`.
    Uniform { half_width: f64 },
    /// Two-sided exponential `e^{-|z|/scale} / (2 scale)`.
    Laplace { scale: f64 },
    /// Centered normal density.
    Gaussian { std: f64 },
}

impl KernelShape {
    fn density(&self, z: f64) -> f64 {
        match *self {
            KernelShape::Uniform { half_width } => {
                if z.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            KernelShape::Laplace { scale } => (-z.abs() / scale).exp() / (2.0 * scale),
            KernelShape::Gaussian { std } => (-0.5 * (z / std).powi(2)).exp() / (std * (2.0 * PI).sqrt()),
        }
    }

    /// Probability mass of the normalized density outside `[-r, r]`.
    fn tail(&self, r: f64) -> f64 {
        match *self {
            KernelShape::Uniform { half_width } => {
                if r >= half_width {
                    0.0
                } else {
                    1.0 - r / half_width
                }
            }
            KernelShape::Laplace { scale } => (-r / scale).exp(),
            KernelShape::Gaussian { std } => erfc(r / (std * SQRT_2)),
        }
    }

    fn radius_for(&self, tol: f64) -> f64 {
        match *self {
            KernelShape::Uniform { half_width } => half_width,
            KernelShape::Laplace { scale } => scale * (1.0 / tol).ln(),
            KernelShape::Gaussian { std } => std * SQRT_2 * erfc_inv(tol),
        }
    }

    fn width(&self) -> f64 {
        match *self {
            KernelShape::Uniform { half_width } => half_width,
            KernelShape::Laplace { scale } => scale,
            KernelShape::Gaussian { std } => std,
        }
    }
}

/// Symmetric nonnegative kernel `c = mass · density`, truncated to `[-radius, radius]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegrableKernel {
    pub shape: KernelShape,
    pub mass: f64,
    pub radius: f64,
    pub tail_tol: f64,
}

impl IntegrableKernel {
    /// Kernel with the smallest truncation radius meeting the default tail tolerance.
    pub fn new(shape: KernelShape, mass: f64) -> Result<Self> {
        Self::with_tail_tol(shape, mass, DEFAULT_TAIL_TOL)
    }

    pub fn with_tail_tol(shape: KernelShape, mass: f64, tail_tol: f64) -> Result<Self> {
        validate_shape(&shape, mass)?;
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::param("tail_tol", format!("{tail_tol} is outside (0, 1)")));
        }
        let radius = shape.radius_for(0.99 * tail_tol / mass.max(1.0));
        Ok(Self { shape, mass, radius, tail_tol })
    }

    pub fn with_radius(shape: KernelShape, mass: f64, radius: f64) -> Result<Self> {
        validate_shape(&shape, mass)?;
        let k = Self { shape, mass, radius, tail_tol: DEFAULT_TAIL_TOL };
        if !(radius > 0.0) || k.tail_mass() > k.tail_tol {
            return Err(Error::param(
                "radius",
                format!("tail mass {:e} beyond radius {radius} exceeds {:e}", k.tail_mass(), k.tail_tol),
            ));
        }
        Ok(k)
    }

    pub fn uniform(half_width: f64, mass: f64) -> Result<Self> {
        Self::new(KernelShape::Uniform { half_width }, mass)
    }

    pub fn laplace(scale: f64, mass: f64) -> Result<Self> {
        Self::new(KernelShape::Laplace { scale }, mass)
    }

    pub fn gaussian(std: f64, mass: f64) -> Result<Self> {
        Self::new(KernelShape::Gaussian { std }, mass)
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        if z.abs() > self.radius {
            0.0
        } else {
            self.mass * self.shape.density(z)
        }
    }

    pub fn tail_mass(&self) -> f64 {
        self.mass * self.shape.tail(self.radius)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            KernelShape::Uniform { half_width } => vec![-half_width, half_width],
            KernelShape::Laplace { .. } => vec![0.0],
            KernelShape::Gaussian { .. } => vec![],
        }
    }

    /// Fourier symbol `∫ c(z) cos(ωz) dz` of the untruncated kernel.
    pub fn closed_form_symbol(&self, w: f64) -> f64 {
        self.mass
            * match self.shape {
                KernelShape::Uniform { half_width } => {
                    let x = w * half_width;
                    if x.abs() < 1e-8 {
                        1.0 - x * x / 6.0
                    } else {
                        x.sin() / x
                    }
                }
                KernelShape::Laplace { scale } => 1.0 / (1.0 + (scale * w).powi(2)),
                KernelShape::Gaussian { std } => (-0.5 * (std * w).powi(2)).exp(),
            }
    }

    /// Draw from `c / a₁` restricted to `[-radius, radius]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z = match self.shape {
                KernelShape::Uniform { half_width } => rng.random_range(-half_width..=half_width),
                KernelShape::Laplace { scale } => {
                    let e: f64 = Exp1.sample(rng);
                    if rng.random::<bool>() {
                        scale * e
                    } else {
                        -scale * e
                    }
                }
                KernelShape::Gaussian { std } => {
                    let g: f64 = StandardNormal.sample(rng);
                    std * g
                }
            };
            if z.abs() <= self.radius {
                return z;
            }
        }
    }

    /// CDF of the truncated jump-size law `c / ∫c` (used by distribution tests).
    pub fn jump_cdf(&self, z: f64) -> f64 {
        let r = self.radius;
        let z = z.clamp(-r, r);
        let raw = |z: f64| match self.shape {
            KernelShape::Uniform { half_width } => ((z + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
            KernelShape::Laplace { scale } => {
                if z < 0.0 {
                    0.5 * (z / scale).exp()
                } else {
                    1.0 - 0.5 * (-z / scale).exp()
                }
            }
            KernelShape::Gaussian { std } => 0.5 * erfc(-z / (std * SQRT_2)),
        };
        (raw(z) - raw(-r)) / (raw(r) - raw(-r))
    }
}

fn validate_shape(shape: &KernelShape, mass: f64) -> Result<()> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Assumption {
            assumption: "iv",
            detail: format!("kernel mass a1 = {mass} must be positive"),
        });
    }
    let w = shape.width();
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::param("kernel width", format!("{w} must be positive")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMoments {
    /// `a₁ = ∫c`
    pub mass: f64,
    /// `s₁ = ∫|z|c`
    pub first_abs: f64,
    /// `s₂ = ∫z²c`
    pub second: f64,
}

/// Adaptive quadrature of the mass, first absolute and second moments over `[-R, R]`.
pub fn kernel_moments(kernel: &IntegrableKernel) -> Result<KernelMoments> {
    moments_with(kernel, kernel.radius, AdaptiveOptions::default())
}

pub(crate) fn moments_with(kernel: &IntegrableKernel, radius: f64, opts: AdaptiveOptions) -> Result<KernelMoments> {
    let mut bp = kernel.breakpoints();
    bp.push(0.0);
    // even integrands: integrate over [0, R] and double
    let half = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        quadrature::adaptive(g, 0.0, radius, &bp, opts).map(|(v, _)| 2.0 * v)
    };
    Ok(KernelMoments {
        mass: half(&|z| kernel.evaluate(z))?,
        first_abs: half(&|z| z * kernel.evaluate(z))?,
        second: half(&|z| z * z * kernel.evaluate(z))?,
    })
}

/// Symmetric discrete measure `Σ wᵢ δ_{zᵢ}` approximating `c(z) dz` on `[-R, R]`.
///
/// Every kernel integral in the cell solver goes through this one measure, so identities
/// such as `∫c = ĉ(0)` and the two routes to the effective diffusivity hold to round-off.
#[derive(Clone, Debug)]
pub struct KernelQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelQuadrature {
    pub fn new(kernel: &IntegrableKernel) -> Self {
        Self::with_panel(kernel, MAX_PANEL)
    }

    pub fn with_panel(kernel: &IntegrableKernel, max_panel: f64) -> Self {
        let bp: Vec<f64> = kernel.breakpoints().into_iter().filter(|p| *p > 0.0).collect();
        let (x, w) = quadrature::composite_rule(0.0, kernel.radius, &bp, max_panel, 8, GL_ORDER);
        let mut nodes = Vec::with_capacity(2 * x.len());
        let mut weights = Vec::with_capacity(2 * x.len());
        for (z, q) in x.iter().zip(&w) {
            let c = kernel.evaluate(*z) * q;
            nodes.push(*z);
            weights.push(c);
            nodes.push(-*z);
            weights.push(c);
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|z| z * z)
    }

    /// `ĉ(ω) = ∫ c(z) cos(ωz) dz`.
    pub fn symbol(&self, w: f64) -> f64 {
        self.integrate(|z| (w * z).cos())
    }

    /// `∫ z c(z) sin(ωz) dz`.
    pub fn first_symbol(&self, w: f64) -> f64 {
        self.integrate(|z| z * (w * z).sin())
    }

    /// Symbols at many frequencies in one pass.
    pub fn symbols(&self, ws: &[f64]) -> Vec<f64> {
        ws.iter().map(|&w| self.symbol(w)).collect()
    }
}

/// Band-limited periodization of `z ↦ c(z/ε)/ε` on a grid of `n` points and period `period`.
///
/// The samples `s` satisfy `h Σ_m s_m u_{j-m} = Σ_k û_k ĉ(εω_k) e^{iω_k x_j}`, i.e. the
/// circular convolution reproduces `∫ c(z) u(x - εz) dz` exactly on resolved modes.
pub fn periodized_samples(quad: &KernelQuadrature, radius: f64, n: usize, period: f64, scale: f64) -> Result<Vec<f64>> {
    if scale * radius > 0.5 * period {
        return Err(Error::Resolution(format!(
            "scaled kernel support {:.6} exceeds half the domain {:.6}",
            scale * radius,
            0.5 * period
        )));
    }
    let ws = spectral::angular_wavenumbers(n, period);
    let coeffs: Vec<Complex64> = ws.iter().map(|&w| Complex64::new(quad.symbol(scale * w) / period, 0.0)).collect();
    Ok(spectral::inverse(&coeffs))
}

/// Periodization of `c(·/ε)/ε` onto the unit torus grid.
pub fn periodize_kernel(kernel: &IntegrableKernel, grid: TorusGrid, eps: Epsilon) -> Result<Vec<f64>> {
    let quad = KernelQuadrature::new(kernel);
    periodized_samples(&quad, kernel.radius, grid.n(), 1.0, eps.value())
}
