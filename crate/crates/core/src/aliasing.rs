//! The semiparametric (YZ) estimator: the spline estimate on `[0, ω_c]`
//! with the folded algebraic tail removed, joined continuously to
//! `φ̂ (ω/ω_c)^{-γ̂}` above the cutoff.
//!
//! Folding sums are written with Hurwitz zeta values. With `x = ω/ω_c`,
//!
//! `Σ_{j≠0} |x + 2j|^{-γ} = 2^{-γ} [ζ(γ, 1 + x/2) + ζ(γ, 1 - x/2)]`,
//!
//! and at `x = 1` it equals `Σ_j |1 + 2j|^{-γ} - 1`, which is what makes the
//! estimator continuous at `ω_c`.

use std::f64::consts::PI;

use crate::decay::DecayEstimate;
use crate::error::{Error, Result};
use crate::quadrature::{cosine_power_tail, gauss_legendre, integrate, Tolerance};
use crate::special::{hurwitz_zeta, riemann_zeta};
use crate::spline_spectral::SplineSpectral;

/// Absolute tolerance for the oscillatory tail integral.
pub const TAIL_TOL: f64 = 1e-8;

fn check_decay(gamma: f64) -> Result<()> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "tail decay must exceed 1 for integrability, got {gamma}"
        )));
    }
    Ok(())
}

/// `Σ_{j∈ℤ} |1 + 2j|^{-γ} = 2(1 - 2^{-γ}) ζ(γ)`.
pub fn odd_zeta_sum(gamma: f64) -> Result<f64> {
    check_decay(gamma)?;
    Ok(2.0 * (1.0 - (-gamma).exp2()) * riemann_zeta(gamma)?)
}

/// `Σ_{j≠0} |x + 2j|^{-γ}` for `x ∈ [0, 1]`.
pub fn folded_tail(x: f64, gamma: f64) -> Result<f64> {
    check_decay(gamma)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "relative frequency must lie in [0, 1], got {x}"
        )));
    }
    Ok((-gamma).exp2() * (hurwitz_zeta(gamma, 1.0 + 0.5 * x)? + hurwitz_zeta(gamma, 1.0 - 0.5 * x)?))
}

/// Share `a(ω)` of the tail mass folded onto `ω ∈ [0, ω_c]`.
pub fn aliasing_fraction(omega: f64, omega_c: f64, gamma: f64) -> Result<f64> {
    Ok(folded_tail(omega / omega_c, gamma)? / odd_zeta_sum(gamma)?)
}

#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    spline: SplineSpectral,
    decay: DecayEstimate,
    tail_scale: f64,
    odd_sum: f64,
    /// `f̂_Δ(ω_c) < 0`, so the tail was set to zero
    tail_clamped: bool,
}

/// Anchors the tail at the cutoff: `φ̂ = max(f̂_Δ(ω_c), 0) / Σ_j |1+2j|^{-γ̂}`.
pub fn assemble(spline: SplineSpectral, decay: DecayEstimate) -> Result<SpectralEstimate> {
    let odd_sum = odd_zeta_sum(decay.gamma_hat)?;
    let at_cutoff = spline.eval_f_delta(spline.omega_c());
    let tail_clamped = at_cutoff < 0.0;
    if tail_clamped {
        log::warn!("spline estimate is negative at the cutoff ({at_cutoff:e}); tail set to zero");
    }
    Ok(SpectralEstimate {
        tail_scale: at_cutoff.max(0.0) / odd_sum,
        spline,
        decay,
        odd_sum,
        tail_clamped,
    })
}

impl SpectralEstimate {
    pub fn spline(&self) -> &SplineSpectral {
        &self.spline
    }

    pub fn decay(&self) -> &DecayEstimate {
        &self.decay
    }

    pub fn gamma_hat(&self) -> f64 {
        self.decay.gamma_hat
    }

    pub fn tail_scale(&self) -> f64 {
        self.tail_scale
    }

    pub fn omega_c(&self) -> f64 {
        self.spline.omega_c()
    }

    pub fn tail_clamped(&self) -> bool {
        self.tail_clamped
    }

    /// The YZ density `f̂(ω)`; may be negative below the cutoff.
    pub fn eval_yz(&self, omega: f64) -> f64 {
        let wc = self.omega_c();
        let x = omega.abs() / wc;
        if x > 1.0 {
            return self.tail_scale * x.powf(-self.gamma_hat());
        }
        let base = self.spline.eval_f_delta(omega.abs());
        if self.tail_scale == 0.0 {
            return base;
        }
        let folded = if x == 1.0 {
            self.odd_sum - 1.0
        } else {
            folded_tail(x, self.gamma_hat()).expect("decay validated at assembly")
        };
        base - self.tail_scale * folded
    }

    /// `f̂⁺(ω) = max(f̂(ω), 0)`.
    pub fn eval_yz_positive(&self, omega: f64) -> f64 {
        self.eval_yz(omega).max(0.0)
    }

    /// `2 φ̂ ω_c^γ̂ ∫_{ω_c}^∞ ω^{-γ̂} cos(ωh) dω`.
    pub fn tail_covariance(&self, h: f64) -> Result<f64> {
        if self.tail_scale == 0.0 {
            return Ok(0.0);
        }
        let wc = self.omega_c();
        let g = self.gamma_hat();
        // scale to t = ω/ω_c so the integral runs over [1, ∞)
        let tol = (TAIL_TOL / (2.0 * self.tail_scale * wc)).max(1e-13);
        let t = cosine_power_tail(1.0, g, h * wc, tol)?;
        Ok(2.0 * self.tail_scale * wc * t)
    }

    /// `C(h) = 2 ∫₀^∞ f̂⁺(ω) cos(ωh) dω` by adaptive quadrature below the
    /// cutoff and the oscillatory tail scheme above it.
    pub fn yz_covariance(&self, h: f64) -> Result<f64> {
        let h = h.abs();
        let wc = self.omega_c();
        let low = integrate(
            |w| self.eval_yz_positive(w) * (w * h).cos(),
            0.0,
            wc,
            Tolerance {
                abs: 1e-10,
                rel: 1e-12,
                max_segments: 20_000,
            },
        )
        .map_err(|e| Error::numerical(format!("YZ covariance at h = {h}: {e}")))?;
        Ok(2.0 * low.value + self.tail_covariance(h)?)
    }
}

/// Precomputed YZ covariance: `f̂⁺` sampled once at Gauss–Legendre nodes
/// on its positive set, so each lag costs one cosine sum plus the tail.
#[derive(Debug, Clone)]
pub struct YzCovariance {
    nodes: Vec<f64>,
    /// `2 w_i f̂⁺(ω_i)`
    weighted: Vec<f64>,
    estimate: SpectralEstimate,
    h_max: f64,
}

const GL_POINTS: usize = 20;

impl YzCovariance {
    /// Accurate for lags up to `h_max`; larger lags use the adaptive path.
    pub fn new(estimate: &SpectralEstimate, h_max: f64) -> Result<Self> {
        let wc = estimate.omega_c();
        let k = estimate.spline().lag_sums().max_lag() as f64;
        let panels = (k / 2.0 + h_max.abs() * wc / (2.0 * PI)).ceil() as usize + 8;
        let width = wc / panels as f64;

        // breakpoints where f̂ changes sign, so f̂⁺ is smooth on each piece
        let probes = 8 * panels;
        let f = |w: f64| estimate.eval_yz(w);
        let mut breaks = vec![0.0];
        let mut prev_w = 0.0;
        let mut prev_f = f(0.0);
        for i in 1..=probes {
            let w = wc * i as f64 / probes as f64;
            let fw = f(w);
            if (prev_f > 0.0) != (fw > 0.0) {
                let (mut a, mut b, fa_pos) = (prev_w, w, prev_f > 0.0);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if (f(m) > 0.0) == fa_pos {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                breaks.push(0.5 * (a + b));
            }
            prev_w = w;
            prev_f = fw;
        }
        breaks.push(wc);

        let (gx, gw) = gauss_legendre(GL_POINTS);
        let mut nodes = Vec::new();
        let mut weighted = Vec::new();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            if estimate.eval_yz(mid) <= 0.0 {
                continue;
            }
            let pieces = ((b - a) / width).ceil().max(1.0) as usize;
            let step = (b - a) / pieces as f64;
            for p in 0..pieces {
                let lo = a + step * p as f64;
                let half = 0.5 * step;
                for (x, w) in gx.iter().zip(&gw) {
                    let node = lo + half * (1.0 + x);
                    nodes.push(node);
                    weighted.push(2.0 * half * w * estimate.eval_yz_positive(node));
                }
            }
        }
        Ok(YzCovariance {
            nodes,
            weighted,
            estimate: estimate.clone(),
            h_max: h_max.abs(),
        })
    }

    pub fn estimate(&self) -> &SpectralEstimate {
        &self.estimate
    }

    pub fn eval(&self, h: f64) -> Result<f64> {
        let h = h.abs();
        if h > self.h_max {
            return self.estimate.yz_covariance(h);
        }
        let low: f64 = self
            .nodes
            .iter()
            .zip(&self.weighted)
            .map(|(w, c)| c * (w * h).cos())
            .sum();
        Ok(low + self.estimate.tail_covariance(h)?)
    }

    /// `C(j·step)` for `j = 0..count`, using the cosine recurrence across lags.
    pub fn eval_grid(&self, step: f64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let last = step.abs() * (count - 1) as f64;
        if last > self.h_max * (1.0 + 1e-12) {
            return Err(Error::parameter(format!(
                "grid reaches lag {last}, beyond the evaluator range {}",
                self.h_max
            )));
        }
        let mut low = vec![0.0; count];
        for (&w, &c) in self.nodes.iter().zip(&self.weighted) {
            let two_cos = 2.0 * (w * step).cos();
            let (mut prev, mut cur) = ((w * step).cos(), 1.0);
            // prev holds cos(-θ) = cos(θ) so the first update yields cos(θ)
            for slot in low.iter_mut() {
                *slot += c * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        low.iter()
            .enumerate()
            .map(|(j, v)| Ok(v + self.estimate.tail_covariance(step * j as f64)?))
            .collect()
    }
}
