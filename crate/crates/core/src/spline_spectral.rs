//! Smoothing-spline (HHC) estimate of the aliased spectral density on
//! `[0, ω_c]`, GCV choice of λ, and the band-limited covariance it implies.
//!
//! With `y_k = S_k/n_k` and `w_k = n_k/(n_k + 2(kπ)²λ)` the density is the
//! cosine series
//!
//! `f̂_Δ(ω) = (1/(2ω_c)) [y_0 + 2 Σ_k w_k y_k cos(kπω/ω_c)]`,
//!
//! normalized two-sided so that `2 ∫₀^{ω_c} f̂_Δ(ω) cos(ωh) dω` is the
//! covariance estimate and `2 ∫₀^{ω_c} f̂_Δ = S_0/n_0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridize::LagSums;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpectral {
    lag_sums: LagSums,
    omega_c: f64,
    lambda: f64,
    weights: Vec<f64>,
    /// `y_0` then `w_k y_k`; zero for empty classes
    coef: Vec<f64>,
}

fn shrinkage(n: u64, k: usize, lambda: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let kp = k as f64 * PI;
    let n = n as f64;
    n / (n + 2.0 * kp * kp * lambda)
}

impl SplineSpectral {
    pub fn new(lag_sums: LagSums, omega_c: f64, lambda: f64) -> Result<Self> {
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::parameter(format!(
                "cutoff frequency must be positive, got {omega_c}"
            )));
        }
        if !(lambda >= 0.0) || lambda.is_infinite() {
            return Err(Error::parameter(format!(
                "smoothing parameter must be finite and non-negative, got {lambda}"
            )));
        }
        if lag_sums.n.first().copied().unwrap_or(0) == 0 {
            return Err(Error::estimation("no observations in lag class 0"));
        }
        let weights: Vec<f64> = (0..lag_sums.n.len())
            .map(|k| if k == 0 { 1.0 } else { shrinkage(lag_sums.n[k], k, lambda) })
            .collect();
        let coef = lag_sums
            .s
            .iter()
            .zip(&lag_sums.n)
            .zip(&weights)
            .map(|((&s, &n), &w)| if n == 0 { 0.0 } else { w * s / n as f64 })
            .collect();
        Ok(SplineSpectral {
            lag_sums,
            omega_c,
            lambda,
            weights,
            coef,
        })
    }

    pub fn lag_sums(&self) -> &LagSums {
        &self.lag_sums
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `w_k` for `k = 0..=K`; `w_0 = 1`, empty classes get 0.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Series coefficients: `y_0`, then `w_k y_k`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// `f̂_Δ(ω)`; the raw estimate, which can be negative.
    pub fn eval_f_delta(&self, omega: f64) -> f64 {
        let theta = PI * omega / self.omega_c;
        // Clenshaw recurrence for Σ a_k cos(kθ) with a_0 = y_0, a_k = 2c_k
        let two_cos = 2.0 * theta.cos();
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coef[1..].iter().rev() {
            let b0 = 2.0 * c + two_cos * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        let series = self.coef[0] + 0.5 * two_cos * b1 - b2;
        series / (2.0 * self.omega_c)
    }

    /// Covariance `2 ∫₀^{ω_c} f̂_Δ(ω) cos(ωh) dω` in closed form:
    /// `y_0 sinc(x) + Σ w_k y_k [sinc(kπ + x) + sinc(kπ − x)]`, `x = ω_c h`.
    pub fn hhc_covariance(&self, h: f64) -> f64 {
        let x = self.omega_c * h.abs();
        if x == 0.0 {
            return self.coef[0];
        }
        let sin_x = x.sin();
        let mut total = self.coef[0] * sin_x / x;
        for (k, &c) in self.coef.iter().enumerate().skip(1) {
            if c == 0.0 {
                continue;
            }
            let kp = k as f64 * PI;
            let d = kp - x;
            let pair = if d.abs() < 1e-3 {
                // sin(kπ - x)/(kπ - x) near its removable singularity
                let near = 1.0 - d * d / 6.0;
                let far = if k % 2 == 0 { sin_x } else { -sin_x } / (kp + x);
                far + near
            } else {
                let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                sign * 2.0 * x * sin_x / ((kp - x) * (kp + x))
            };
            total += c * pair;
        }
        total
    }
}

/// `count` values log-spaced on `[1/n_obs, n_obs]`.
pub fn lambda_grid(n_obs: usize, count: usize) -> Vec<f64> {
    let n = n_obs.max(2) as f64;
    let (lo, hi) = (-n.ln(), n.ln());
    if count <= 1 {
        return vec![1.0];
    }
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// GCV score of the linear shrinkage `ŷ_k = w_k y_k`, or `None` when the
/// trace denominator degenerates.
pub fn gcv_score(lag_sums: &LagSums, lambda: f64) -> Option<f64> {
    let mut rss = 0.0;
    let mut trace = 0.0;
    let mut k_eff = 0usize;
    for (k, (&s, &n)) in lag_sums.s.iter().zip(&lag_sums.n).enumerate().skip(1) {
        if n == 0 {
            continue;
        }
        let w = shrinkage(n, k, lambda);
        let y = s / n as f64;
        let r = y - w * y;
        rss += n as f64 * r * r;
        trace += w;
        k_eff += 1;
    }
    if k_eff == 0 {
        return None;
    }
    let denom = (1.0 - trace / k_eff as f64).powi(2);
    if denom < 1e-300 || !rss.is_finite() {
        return None;
    }
    Some(rss / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcvChoice {
    pub lambda: f64,
    /// `None` when every candidate was degenerate and the median was taken
    pub score: Option<f64>,
}

/// Minimizes the GCV score over `candidates`; ties go to the smaller λ.
pub fn select_lambda_gcv(lag_sums: &LagSums, candidates: &[f64]) -> Result<GcvChoice> {
    if candidates.is_empty() {
        return Err(Error::parameter("empty smoothing-parameter grid"));
    }
    if let Some(bad) = candidates.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::parameter(format!(
            "smoothing-parameter candidates must be positive, got {bad}"
        )));
    }
    if lag_sums.nonzero_classes() == 0 {
        return Err(Error::estimation("no pairs at any positive lag; cannot select λ"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &sorted {
        if let Some(score) = gcv_score(lag_sums, lambda) {
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((lambda, score));
            }
        }
    }
    Ok(match best {
        Some((lambda, score)) => GcvChoice {
            lambda,
            score: Some(score),
        },
        None => {
            let lambda = sorted[(sorted.len() - 1) / 2];
            log::warn!("GCV degenerate for every candidate; using median λ = {lambda}");
            GcvChoice {
                lambda,
                score: None,
            }
        }
    })
}
