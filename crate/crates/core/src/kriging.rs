//! Simple kriging with an arbitrary covariance, plus the increase in
//! prediction error (IPE) relative to kriging with the true covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::simulate::{covariance_matrix, SampleSet};

/// Diagonal jitter multipliers of `Ĉ(0)` tried in turn.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

/// Simple-kriging system `Σ α = X`, factored once and reused per target.
pub struct SimpleKriging {
    locations: Vec<f64>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    c0: f64,
    jitter: f64,
}

impl SimpleKriging {
    /// Factors `Σ_ij = cov(|s_i - s_j|)`, adding diagonal jitter from the
    /// ladder when the matrix is not numerically positive definite.
    /// `name` identifies the covariance in error messages.
    pub fn fit(sample: &SampleSet, cov: &dyn Fn(f64) -> f64, name: &str) -> Result<Self> {
        let c0 = cov(0.0);
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::numerical(format!(
                "{name} covariance has non-positive variance {c0}"
            )));
        }
        let sigma = covariance_matrix(sample.locations(), cov);
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "{name} covariance produced non-finite matrix entries"
            )));
        }
        let n = sample.len();
        for level in JITTER_LADDER {
            let jitter = level * c0;
            let m = if jitter == 0.0 {
                sigma.clone()
            } else {
                &sigma + DMatrix::identity(n, n) * jitter
            };
            if let Some(chol) = Cholesky::new(m) {
                if level > 0.0 {
                    log::debug!("{name} covariance needed jitter {level:e}·C(0)");
                }
                let x = DVector::from_column_slice(sample.values());
                let alpha = chol.solve(&x);
                return Ok(SimpleKriging {
                    locations: sample.locations().to_vec(),
                    alpha,
                    chol,
                    c0,
                    jitter: level,
                });
            }
        }
        Err(Error::numerical(format!(
            "{name} covariance matrix is not positive definite even with jitter {:e}·C(0)",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    /// Jitter multiplier of `C(0)` that made the factorization succeed.
    pub fn jitter_level(&self) -> f64 {
        self.jitter
    }

    fn cross(&self, target: f64, cov: &dyn Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.locations.len(),
            self.locations.iter().map(|&s| cov(target - s)),
        )
    }

    /// `Ẑ(s) = c(s)ᵀ Σ⁻¹ X`.
    pub fn predict(&self, target: f64, cov: &dyn Fn(f64) -> f64) -> f64 {
        self.cross(target, cov).dot(&self.alpha)
    }

    /// Kriging variance `C(0) - c(s)ᵀ Σ⁻¹ c(s)`.
    pub fn variance(&self, target: f64, cov: &dyn Fn(f64) -> f64) -> f64 {
        let c = self.cross(target, cov);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&c)
            .expect("Cholesky factor has a positive diagonal");
        self.c0 - v.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingResult {
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
    pub jitter_level: f64,
}

/// Predicts at every target with one factorization.
pub fn krige(
    sample: &SampleSet,
    cov: &dyn Fn(f64) -> f64,
    name: &str,
    targets: &[f64],
) -> Result<KrigingResult> {
    let k = SimpleKriging::fit(sample, cov, name)?;
    let predictions: Vec<f64> = targets.iter().map(|&t| k.predict(t, cov)).collect();
    if let Some(bad) = predictions.iter().find(|p| !p.is_finite()) {
        return Err(Error::numerical(format!("{name} kriging produced prediction {bad}")));
    }
    Ok(KrigingResult {
        targets: targets.to_vec(),
        predictions,
        jitter_level: k.jitter_level(),
    })
}

/// `n_pred` equally spaced interior points `L·i/(n_pred+1)`.
pub fn prediction_targets(domain_length: f64, n_pred: usize) -> Result<Vec<f64>> {
    if n_pred == 0 {
        return Err(Error::parameter("need at least one prediction target"));
    }
    Ok((1..=n_pred)
        .map(|i| domain_length * i as f64 / (n_pred + 1) as f64)
        .collect())
}

/// Per-target `[Ẑ(s) - Ẑ₀(s)]²`.
pub fn ipe(estimated: &KrigingResult, truth: &KrigingResult) -> Result<Vec<f64>> {
    if estimated.targets != truth.targets {
        return Err(Error::parameter("IPE needs predictions at identical targets"));
    }
    Ok(estimated
        .predictions
        .iter()
        .zip(&truth.predictions)
        .map(|(a, b)| (a - b) * (a - b))
        .collect())
}

/// Median with the midpoint convention for even counts; NaNs are ignored.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Covariance tabulated at `h = j·step` and read back by cubic Lagrange
/// interpolation; lags below `exact_below` go to the exact evaluator.
pub struct CovarianceTable<'a> {
    step: f64,
    values: Vec<f64>,
    exact_below: f64,
    exact: &'a dyn Fn(f64) -> f64,
}

impl<'a> CovarianceTable<'a> {
    pub fn new(step: f64, values: Vec<f64>, exact_below: f64, exact: &'a dyn Fn(f64) -> f64) -> Result<Self> {
        if values.len() < 4 || !(step > 0.0) {
            return Err(Error::parameter("covariance table needs ≥ 4 entries and a positive step"));
        }
        Ok(CovarianceTable {
            step,
            values,
            exact_below,
            exact,
        })
    }

    pub fn eval(&self, h: f64) -> f64 {
        let h = h.abs();
        if h < self.exact_below {
            return (self.exact)(h);
        }
        let t = h / self.step;
        let last = self.values.len() - 1;
        if t >= last as f64 {
            return (self.exact)(h);
        }
        let j = (t.floor() as usize).clamp(1, last - 2);
        let x = t - (j - 1) as f64;
        let y = &self.values[j - 1..j + 3];
        // Lagrange basis on nodes 0, 1, 2, 3
        let l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
        let l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
        let l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
        let l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
        l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CovarianceModel;
    use crate::simulate::{draw_locations, simulate_gp, simulate_sample};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn exp_cov(h: f64) -> f64 {
        (-h.abs()).exp()
    }

    #[test]
    fn interpolates_observations() {
        let m = CovarianceModel::exponential(1.0, 1.0).unwrap();
        let s = simulate_sample(&m, 40, 40.0, 4).unwrap();
        let targets = s.locations()[..10].to_vec();
        let r = krige(&s, &exp_cov, "exponential", &targets).unwrap();
        assert_eq!(r.jitter_level, 0.0);
        for (p, x) in r.predictions.iter().zip(s.values()) {
            assert_abs_diff_eq!(*p, *x, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_observation() {
        let s = SampleSet::new(vec![1.0], vec![2.0], 3.0).unwrap();
        let r = krige(&s, &exp_cov, "exp", &[2.5]).unwrap();
        assert_abs_diff_eq!(r.predictions[0], (-1.5f64).exp() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn targets_and_ipe() {
        let t = prediction_targets(100.0, 100).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t[0] > 0.0 && t[99] < 100.0);
        assert_eq!(prediction_targets(10.0, 1).unwrap(), vec![5.0]);
        let t2 = prediction_targets(3.0, 2).unwrap();
        assert_abs_diff_eq!(t2[0], 1.0);
        assert_abs_diff_eq!(t2[1], 2.0);
        let a = KrigingResult {
            targets: vec![1.0],
            predictions: vec![1.5],
            jitter_level: 0.0,
        };
        let b = KrigingResult {
            predictions: vec![1.0],
            ..a.clone()
        };
        assert_eq!(ipe(&a, &b).unwrap(), vec![0.25]);
        assert_eq!(ipe(&a, &a).unwrap(), vec![0.0]);
    }

    #[test]
    fn median_matches_sort_reference() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        assert_eq!(median(&v), Some(3.5));
        assert_eq!(median(&v[..7]), Some(3.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn indefinite_covariance_uses_jitter_or_fails() {
        // a band-limited sinc covariance with near-duplicate points is
        // numerically singular
        let s = SampleSet::new(vec![0.0, 1e-9, 2.0], vec![1.0, 1.0, 0.0], 3.0).unwrap();
        let sinc = |h: f64| if h == 0.0 { 1.0 } else { h.sin() / h };
        let r = krige(&s, &sinc, "sinc", &[1.0]).unwrap();
        assert!(r.jitter_level > 0.0);
        let neg = |h: f64| if h == 0.0 { 1.0 } else { -2.0 };
        let err = krige(&s, &neg, "broken estimator", &[1.0]).unwrap_err();
        assert!(err.to_string().contains("broken estimator"));
    }

    #[test]
    fn kriging_variance_predicts_mspe() {
        let m = CovarianceModel::exponential(1.0, 1.0).unwrap();
        let locs = draw_locations(30, 20.0, 99).unwrap();
        let target = 10.3;
        let cov = |h: f64| m.covariance(h);
        let mut all = locs.clone();
        all.push(target);
        let reps = 500;
        let mut sse = 0.0;
        let mut var = 0.0;
        for seed in 0..reps {
            // simulate jointly with the target, then hide it
            let joint = simulate_gp(&m, &all, 20.0, 10_000 + seed).unwrap();
            let idx = joint.locations().iter().position(|&s| s == target).unwrap();
            let truth = joint.values()[idx];
            let (l, v): (Vec<f64>, Vec<f64>) = joint
                .locations()
                .iter()
                .zip(joint.values())
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, (a, b))| (*a, *b))
                .unzip();
            let obs = SampleSet::new(l, v, 20.0).unwrap();
            let k = SimpleKriging::fit(&obs, &cov, "true").unwrap();
            let e = k.predict(target, &cov) - truth;
            sse += e * e;
            var = k.variance(target, &cov);
        }
        let mspe = sse / reps as f64;
        assert!((mspe / var - 1.0).abs() < 0.15, "mspe {mspe} variance {var}");
    }

    #[test]
    fn table_interpolation() {
        let exact = |h: f64| (-h).exp() * (0.3 * h).cos();
        let step = 1.0 / 32.0;
        let vals: Vec<f64> = (0..=640).map(|j| exact(j as f64 * step)).collect();
        let t = CovarianceTable::new(step, vals, 0.5, &exact).unwrap();
        for i in 0..2000 {
            let h = i as f64 * 0.0101;
            assert_abs_diff_eq!(t.eval(h), exact(h), epsilon = 1e-7);
        }
    }

    proptest! {
        #[test]
        fn scaling_covariance_leaves_predictions(scale in 0.01f64..100.0, seed in 0u64..1000) {
            let m = CovarianceModel::exponential(1.0, 2.0).unwrap();
            let s = simulate_sample(&m, 25, 25.0, seed).unwrap();
            let targets = prediction_targets(25.0, 7).unwrap();
            let base = |h: f64| m.covariance(h);
            let scaled = |h: f64| scale * m.covariance(h);
            let a = krige(&s, &base, "base", &targets).unwrap();
            let b = krige(&s, &scaled, "scaled", &targets).unwrap();
            for (p, q) in a.predictions.iter().zip(&b.predictions) {
                prop_assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()));
            }
        }

        #[test]
        fn order_of_observations_is_irrelevant(seed in 0u64..1000) {
            let m = CovarianceModel::exponential(1.0, 1.5).unwrap();
            let s = simulate_sample(&m, 20, 20.0, seed).unwrap();
            let rev = SampleSet::new(
                s.locations().iter().rev().copied().collect(),
                s.values().iter().rev().copied().collect(),
                20.0,
            ).unwrap();
            let cov = |h: f64| m.covariance(h);
            let a = krige(&s, &cov, "a", &[3.3, 10.0]).unwrap();
            let b = krige(&rev, &cov, "b", &[3.3, 10.0]).unwrap();
            prop_assert_eq!(a.predictions, b.predictions);
        }
    }
}
