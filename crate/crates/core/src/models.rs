//! Parametric covariance models and their spectral densities.
//!
//! Spectral densities use the two-sided convention
//! `C(h) = 2 ∫₀^∞ f(ω) cos(ωh) dω`, so `2 ∫₀^∞ f = C(0)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::special::{bessel_k, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Matern,
    Spherical,
    Exponential,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern" => Ok(ModelKind::Matern),
            "spherical" => Ok(ModelKind::Spherical),
            "exponential" => Ok(ModelKind::Exponential),
            other => Err(Error::parameter(format!("unknown model kind '{other}'"))),
        }
    }
}

fn default_nu() -> f64 {
    0.5
}

/// An isotropic covariance model. `nu` is only read for Matérn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub kind: ModelKind,
    pub sigma2: f64,
    pub range: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

impl CovarianceModel {
    pub fn new(kind: ModelKind, sigma2: f64, range: f64, nu: f64) -> Result<Self> {
        let m = CovarianceModel {
            kind,
            sigma2,
            range,
            nu,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn matern(sigma2: f64, range: f64, nu: f64) -> Result<Self> {
        Self::new(ModelKind::Matern, sigma2, range, nu)
    }

    pub fn exponential(sigma2: f64, range: f64) -> Result<Self> {
        Self::new(ModelKind::Exponential, sigma2, range, 0.5)
    }

    pub fn spherical(sigma2: f64, range: f64) -> Result<Self> {
        Self::new(ModelKind::Spherical, sigma2, range, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::parameter(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::parameter(format!(
                "range must be positive, got {}",
                self.range
            )));
        }
        if self.kind == ModelKind::Matern && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::parameter(format!(
                "Matérn smoothness must be positive, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    /// Smoothness actually used: exponential is Matérn with ν = 1/2.
    fn smoothness(&self) -> f64 {
        match self.kind {
            ModelKind::Exponential => 0.5,
            _ => self.nu,
        }
    }

    /// Covariance at lag `h` (negative lags are reflected).
    pub fn covariance(&self, h: f64) -> f64 {
        let h = h.abs();
        match self.kind {
            ModelKind::Spherical => {
                let t = h / self.range;
                if t >= 1.0 {
                    0.0
                } else {
                    self.sigma2 * (1.0 - 1.5 * t + 0.5 * t * t * t)
                }
            }
            ModelKind::Exponential | ModelKind::Matern => {
                matern_correlation(h / self.range, self.smoothness()) * self.sigma2
            }
        }
    }

    /// Two-sided spectral density at frequency `omega`.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let w = omega.abs();
        match self.kind {
            ModelKind::Spherical => {
                self.sigma2 * self.range / PI * spherical_cosine_moment(w * self.range)
            }
            ModelKind::Exponential | ModelKind::Matern => {
                let nu = self.smoothness();
                let log_c = ln_gamma(nu + 0.5) - ln_gamma(nu) - 0.5 * PI.ln();
                let u = w * self.range;
                self.sigma2
                    * self.range
                    * (log_c - (nu + 0.5) * (u * u).ln_1p()).exp()
            }
        }
    }

    /// Variogram `2(C(0) - C(h))`.
    pub fn true_variogram(&self, h: f64) -> f64 {
        2.0 * (self.covariance(0.0) - self.covariance(h))
    }
}

/// Matérn correlation `2^{1-ν}/Γ(ν) x^ν K_ν(x)` at scaled lag `x ≥ 0`.
pub fn matern_correlation(x: f64, nu: f64) -> f64 {
    if x < 1e-12 {
        return 1.0;
    }
    if nu == 0.5 {
        return (-x).exp();
    }
    // far tail: x^{ν-1/2} e^{-x} below e^{-50}
    if (nu - 0.5) * x.ln() - x < -50.0 {
        return 0.0;
    }
    let log_pre = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * x.ln();
    (log_pre.exp() * bessel_k(nu, x)).min(1.0)
}

/// `∫₀¹ (1 - 1.5t + 0.5t³) cos(ut) dt`.
fn spherical_cosine_moment(u: f64) -> f64 {
    if u < 1.0 {
        let u2 = u * u;
        let mut term = 1.0; // (-1)^n u^{2n} / (2n)!
        let mut sum = 0.0;
        for n in 0..20 {
            let m = 2.0 * n as f64;
            sum += term * (1.0 / (m + 1.0) - 1.5 / (m + 2.0) + 0.5 / (m + 4.0));
            term *= -u2 / ((m + 1.0) * (m + 2.0));
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        let (s, c) = u.sin_cos();
        let u2 = u * u;
        1.5 / u2 - 3.0 * s / (u2 * u) + 3.0 * (1.0 - c) / (u2 * u2)
    }
}

/// Spherical spectral density by adaptive quadrature of
/// `(1/π) ∫₀^φ C(h) cos(ωh) dh`; the cross-check for the closed form.
pub fn spherical_density_by_quadrature(model: &CovarianceModel, omega: f64) -> Result<f64> {
    if model.kind != ModelKind::Spherical {
        return Err(Error::parameter("quadrature density is only defined for the spherical model"));
    }
    let q = integrate(
        |h| model.covariance(h) * (omega * h).cos(),
        0.0,
        model.range,
        Tolerance {
            abs: 1e-13,
            rel: 1e-12,
            max_segments: 2000,
        },
    )?;
    Ok(q.value / PI)
}
