//! Physical parameters and the manufactured-solution forcing.

use crate::error::{domain, Result};
use crate::grid::{Field, Grid2D};
use crate::special::omega_unchecked;

/// Parameters of `d_t^alpha phi = -kappa mu`, `mu = phi^3 - phi - eps^2 Delta phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    /// Mobility.
    pub kappa: f64,
    /// Interface width; `eps^2` multiplies the Laplacian in `mu`.
    pub eps: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, kappa: f64, eps: f64) -> Result<Self> {
        let p = Self { alpha, kappa, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(domain(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(domain(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn eps2(&self) -> f64 {
        self.eps * self.eps
    }
}

/// Space-time source term added to the right-hand side of the equation.
pub trait Forcing: Send + Sync {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64;

    fn sample(&self, grid: &Grid2D, t: f64) -> Field {
        grid.sample(|x, y| self.eval(x, y, t))
    }
}

/// Exact solution `Phi = omega_{1+sigma}(t) sin(x) sin(y)` with regularity
/// parameter `sigma` in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub sigma: f64,
}

impl ManufacturedCase {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(domain(format!("sigma must lie in (0, 1), got {sigma}")));
        }
        Ok(Self { sigma })
    }

    /// `Phi(x, y, t)`; zero at `t = 0`.
    pub fn exact(&self, x: f64, y: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        omega_unchecked(1.0 + self.sigma, t) * x.sin() * y.sin()
    }

    pub fn exact_field(&self, grid: &Grid2D, t: f64) -> Field {
        grid.sample(|x, y| self.exact(x, y, t))
    }

    /// Source making `Phi` an exact solution:
    /// `g = omega_{1+sigma-alpha}(t) s + kappa (Phi^3 - Phi + 2 eps^2 Phi)`,
    /// with `s = sin x sin y`, using `d_t^alpha omega_{1+sigma} = omega_{1+sigma-alpha}`
    /// and `Delta Phi = -2 Phi`.
    pub fn force(&self, params: &ModelParams, x: f64, y: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain(format!("manufactured forcing needs t > 0, got {t}")));
        }
        Ok(self.force_unchecked(params, x, y, t))
    }

    fn force_unchecked(&self, params: &ModelParams, x: f64, y: f64, t: f64) -> f64 {
        let s = x.sin() * y.sin();
        let phi = omega_unchecked(1.0 + self.sigma, t) * s;
        let caputo = omega_unchecked(1.0 + self.sigma - params.alpha, t) * s;
        caputo + params.kappa * (phi * phi * phi - phi + 2.0 * params.eps2() * phi)
    }

    pub fn forcing(&self, params: ModelParams) -> ManufacturedForcing {
        ManufacturedForcing { case: *self, params }
    }
}

/// [`ManufacturedCase`] bound to model parameters.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedForcing {
    case: ManufacturedCase,
    params: ModelParams,
}

impl Forcing for ManufacturedForcing {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.case.force_unchecked(&self.params, x, y, t)
    }
}
