//! Small-lag empirical variograms and the log–log regression for the
//! variogram exponent `α₀`, giving the spectral tail decay `γ̂ = α̂₀ + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::SampleSet;

/// Lags `h_m` and half-widths `δ_m` of the tolerance regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSchedule {
    pub lags: Vec<f64>,
    pub tolerances: Vec<f64>,
}

impl LagSchedule {
    /// `m` lags log-spaced on `[h_max/4, h_max]`. Half-widths are 99% of
    /// half the geometric gap, so neighbouring bins never touch.
    pub fn log_spaced(h_max: f64, m: usize) -> Result<Self> {
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(Error::parameter(format!("h_max must be positive, got {h_max}")));
        }
        if m < 2 {
            return Err(Error::parameter(format!("need at least 2 lags, got {m}")));
        }
        let gap = 4f64.ln() / (m - 1) as f64;
        let ratio = 0.99 * (gap / 2.0).tanh();
        let lags: Vec<f64> = (0..m)
            .map(|i| h_max / 4.0 * (gap * i as f64).exp())
            .collect();
        let tolerances = lags.iter().map(|h| ratio * h).collect();
        Ok(LagSchedule { lags, tolerances })
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.lags.len() != self.tolerances.len() {
            return Err(Error::parameter("lags and tolerances differ in length"));
        }
        for (i, (&h, &d)) in self.lags.iter().zip(&self.tolerances).enumerate() {
            if !(d > 0.0 && d < h) {
                return Err(Error::parameter(format!(
                    "tolerance {d} at lag {h} must lie in (0, h)"
                )));
            }
            if i > 0 && self.lags[i - 1] + self.tolerances[i - 1] >= h - d {
                return Err(Error::parameter(format!(
                    "tolerance regions around lags {} and {h} overlap",
                    self.lags[i - 1]
                )));
            }
        }
        Ok(())
    }
}

/// Ten log-spaced lags up to `h_max` (default `domain_length/1000`). Lags
/// whose whole bin lies below the smallest pairwise distance are dropped.
pub fn default_schedule(sample: &SampleSet, h_max: Option<f64>) -> Result<LagSchedule> {
    if sample.len() < 8 {
        return Err(Error::data(format!(
            "need at least 8 observations for the decay fit, got {}",
            sample.len()
        )));
    }
    let h_max = h_max.unwrap_or(sample.domain_length() / 1000.0);
    let mut sched = LagSchedule::log_spaced(h_max, 10)?;
    let min_gap = sample
        .locations()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let keep: Vec<bool> = sched
        .lags
        .iter()
        .zip(&sched.tolerances)
        .map(|(h, d)| h + d >= min_gap)
        .collect();
    let dropped = keep.iter().filter(|&&k| !k).count();
    if dropped > 0 {
        log::warn!(
            "dropping {dropped} variogram lags below the minimum pairwise distance {min_gap:e}"
        );
        let mut it = keep.iter();
        sched.lags.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        sched.tolerances.retain(|_| *it.next().unwrap());
    }
    if sched.len() < 2 {
        return Err(Error::estimation(format!(
            "fewer than 2 variogram lags remain above the minimum pairwise distance {min_gap:e}"
        )));
    }
    Ok(sched)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramPoint {
    pub h: f64,
    pub u: f64,
    pub n: u64,
}

/// `(h_m, u_m, N_m)`; `N_m = 0` marks an unusable lag.
pub type VariogramTriples = Vec<VariogramPoint>;

/// Averages `[X(s_i) - X(s_j)]²` over unordered pairs whose distance lies
/// in the closed band `[h_m - δ_m, h_m + δ_m]`.
pub fn empirical_variogram(sample: &SampleSet, schedule: &LagSchedule) -> Result<VariogramTriples> {
    schedule.validate()?;
    let lo: Vec<f64> = schedule
        .lags
        .iter()
        .zip(&schedule.tolerances)
        .map(|(h, d)| h - d)
        .collect();
    let hi: Vec<f64> = schedule
        .lags
        .iter()
        .zip(&schedule.tolerances)
        .map(|(h, d)| h + d)
        .collect();
    let reach = hi.iter().copied().fold(0.0, f64::max);
    let mut sum = vec![0.0; schedule.len()];
    let mut count = vec![0u64; schedule.len()];
    let (s, x) = (sample.locations(), sample.values());
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let d = s[j] - s[i];
            if d > reach {
                break;
            }
            // bins are disjoint and ordered: the first with hi ≥ d is the candidate
            let m = hi.partition_point(|&edge| edge < d);
            if m < lo.len() && d >= lo[m] {
                let z = x[i] - x[j];
                sum[m] += z * z;
                count[m] += 1;
            }
        }
    }
    Ok(schedule
        .lags
        .iter()
        .enumerate()
        .map(|(m, &h)| VariogramPoint {
            h,
            u: if count[m] > 0 { sum[m] / count[m] as f64 } else { 0.0 },
            n: count[m],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub alpha0_hat: f64,
    pub gamma_hat: f64,
    /// intercept of `log u = c + α log h`
    pub intercept: f64,
    pub m_used: usize,
    /// set when the raw slope fell outside `[ε, 2 - ε]`
    pub clamped: bool,
}

pub const ALPHA_EPS: f64 = 1e-3;

/// Centered OLS slope of `log u_m` on `log h_m` over lags with pairs and
/// positive `u_m`, clamped to `[ε, 2 - ε]`.
pub fn fit_alpha0(triples: &[VariogramPoint]) -> Result<DecayEstimate> {
    let pts: Vec<(f64, f64)> = triples
        .iter()
        .filter(|p| p.n > 0 && p.u > 0.0 && p.h > 0.0)
        .map(|p| (p.h.ln(), p.u.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::estimation(format!(
            "decay fit needs at least 2 usable variogram lags, got {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::estimation("variogram lags have no spread in log scale"));
    }
    let raw = sxy / sxx;
    let intercept = ybar - raw * xbar;
    let alpha = raw.clamp(ALPHA_EPS, 2.0 - ALPHA_EPS);
    let clamped = alpha != raw;
    if clamped {
        log::warn!("variogram exponent {raw} clamped to {alpha}");
    }
    Ok(DecayEstimate {
        alpha0_hat: alpha,
        gamma_hat: alpha + 1.0,
        intercept,
        m_used: pts.len(),
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spread_sample(n: usize, len: f64) -> SampleSet {
        let locs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * len / n as f64).collect();
        SampleSet::new(locs, vec![0.0; n], len).unwrap()
    }

    #[test]
    fn default_schedule_follows_domain_rule() {
        for (n, len) in [(250, 250.0), (1000, 1000.0)] {
            let locs = crate::simulate::draw_locations(n, len, 5).unwrap();
            let sample = SampleSet::new(locs, vec![0.0; n], len).unwrap();
            let s = default_schedule(&sample, None).unwrap();
            assert_eq!(s.len(), 10);
            let top = len / 1000.0;
            assert!(s.lags.iter().all(|&h| h > 0.0 && h <= top * (1.0 + 1e-12)));
            assert_abs_diff_eq!(s.lags[0], top / 4.0, epsilon = 1e-15);
            s.validate().unwrap();
        }
    }

    #[test]
    fn bins_are_disjoint() {
        let s = LagSchedule::log_spaced(3.0, 10).unwrap();
        for w in 0..9 {
            assert!(s.lags[w] + s.tolerances[w] < s.lags[w + 1] - s.tolerances[w + 1]);
        }
    }

    #[test]
    fn sparse_lags_are_dropped() {
        // points spaced 1 apart, so lags ≤ h_max = 0.25 see no pairs
        let sample = spread_sample(20, 20.0);
        let err = default_schedule(&sample, Some(0.25)).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
        let kept = default_schedule(&sample, Some(1.5)).unwrap();
        assert!(kept.len() < 10 && kept.len() >= 2);
    }

    #[test]
    fn hand_pair() {
        let s = SampleSet::new(vec![0.0, 1.0], vec![1.0, 3.0], 1.0).unwrap();
        let sched = LagSchedule {
            lags: vec![1.0],
            tolerances: vec![0.1],
        };
        let t = empirical_variogram(&s, &sched).unwrap();
        assert_eq!((t[0].u, t[0].n), (4.0, 1));
    }

    #[test]
    fn bin_edges_are_closed() {
        let s = SampleSet::new(vec![0.0, 1.25], vec![0.0, 2.0], 2.0).unwrap();
        let sched = LagSchedule {
            lags: vec![1.0],
            tolerances: vec![0.25],
        };
        let t = empirical_variogram(&s, &sched).unwrap();
        assert_eq!(t[0].n, 1);
    }

    #[test]
    fn constant_field_has_zero_variogram() {
        let locs: Vec<f64> = (0..50).map(|i| i as f64 * 0.013).collect();
        let s = SampleSet::new(locs, vec![2.5; 50], 1.0).unwrap();
        let sched = LagSchedule::log_spaced(0.3, 10).unwrap();
        let t = empirical_variogram(&s, &sched).unwrap();
        assert!(t.iter().all(|p| p.u == 0.0));
        assert!(t.iter().any(|p| p.n > 0));
    }

    fn power_law(c: f64, alpha: f64) -> Vec<VariogramPoint> {
        LagSchedule::log_spaced(0.8, 10)
            .unwrap()
            .lags
            .into_iter()
            .map(|h| VariogramPoint {
                h,
                u: c * h.powf(alpha),
                n: 5,
            })
            .collect()
    }

    #[test]
    fn noiseless_power_laws() {
        let e = fit_alpha0(&power_law(3.0, 1.0)).unwrap();
        assert_abs_diff_eq!(e.alpha0_hat, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.intercept, 3f64.ln(), epsilon = 1e-12);
        assert_eq!(e.gamma_hat, e.alpha0_hat + 1.0);
        let e = fit_alpha0(&power_law(2.0, 0.5)).unwrap();
        assert_abs_diff_eq!(e.alpha0_hat, 0.5, epsilon = 1e-12);
        assert!(!e.clamped);
    }

    #[test]
    fn steep_slope_is_clamped() {
        let e = fit_alpha0(&power_law(1.0, 2.6)).unwrap();
        assert!(e.clamped);
        assert_eq!(e.alpha0_hat, 2.0 - ALPHA_EPS);
    }

    #[test]
    fn too_few_lags() {
        let mut t = power_law(1.0, 1.0);
        for p in t.iter_mut().skip(1) {
            p.n = 0;
        }
        assert!(fit_alpha0(&t).is_err());
        let same = vec![
            VariogramPoint { h: 1.0, u: 1.0, n: 1 },
            VariogramPoint { h: 1.0, u: 2.0, n: 1 },
        ];
        assert!(fit_alpha0(&same).is_err());
    }

    proptest! {
        #[test]
        fn ols_is_exact_on_power_laws(c in 0.01f64..100.0, alpha in 0.01f64..1.99) {
            let e = fit_alpha0(&power_law(c, alpha)).unwrap();
            prop_assert!((e.alpha0_hat - alpha).abs() < 1e-10);
            prop_assert!((e.intercept - c.ln()).abs() < 1e-9);
        }

        #[test]
        fn slope_ignores_vertical_and_horizontal_scale(
            us in prop::collection::vec(0.1f64..10.0, 10),
            k in 0.01f64..100.0,
            a in 0.01f64..100.0,
        ) {
            let base: Vec<VariogramPoint> = LagSchedule::log_spaced(1.0, 10).unwrap().lags
                .into_iter().zip(&us).map(|(h, &u)| VariogramPoint { h, u, n: 3 }).collect();
            let e0 = fit_alpha0(&base).unwrap();
            let scaled_u: Vec<_> = base.iter().map(|p| VariogramPoint { u: p.u * k, ..*p }).collect();
            let scaled_h: Vec<_> = base.iter().map(|p| VariogramPoint { h: p.h * a, ..*p }).collect();
            let e1 = fit_alpha0(&scaled_u).unwrap();
            let e2 = fit_alpha0(&scaled_h).unwrap();
            prop_assert!((e0.alpha0_hat - e1.alpha0_hat).abs() < 1e-9);
            prop_assert!((e0.alpha0_hat - e2.alpha0_hat).abs() < 1e-9);
        }

        #[test]
        fn variogram_is_permutation_invariant(
            pts in prop::collection::vec((0.0f64..5.0, -2.0f64..2.0), 2..60),
        ) {
            let (l, v): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            let a = SampleSet::new(l.clone(), v.clone(), 5.0).unwrap();
            let b = SampleSet::new(l.into_iter().rev().collect(), v.into_iter().rev().collect(), 5.0).unwrap();
            let sched = LagSchedule::log_spaced(1.0, 6).unwrap();
            let ta = empirical_variogram(&a, &sched).unwrap();
            let tb = empirical_variogram(&b, &sched).unwrap();
            for (p, q) in ta.iter().zip(&tb) {
                prop_assert_eq!(p.n, q.n);
                prop_assert!((p.u - q.u).abs() < 1e-12 * (1.0 + p.u));
            }
        }
    }
}
