//! Gaussian-process samples at uniformly scattered locations.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; locations use stream 0
//! and field values stream 1, so the two draws never share a keystream.
//! Outputs are reproducible across platforms for a given build.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::CovarianceModel;

/// Observations `X(s_i)` at sorted locations inside `[0, domain_length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    locations: Vec<f64>,
    values: Vec<f64>,
    domain_length: f64,
}

impl SampleSet {
    /// Builds a sample, sorting by location and permuting values alongside.
    pub fn new(locations: Vec<f64>, values: Vec<f64>, domain_length: f64) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::data(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.is_empty() {
            return Err(Error::data("sample is empty"));
        }
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::parameter(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        if let Some(bad) = locations
            .iter()
            .chain(&values)
            .find(|v| !v.is_finite())
        {
            return Err(Error::data(format!("non-finite value {bad} in sample")));
        }
        if let Some(out) = locations
            .iter()
            .find(|&&s| s < 0.0 || s > domain_length)
        {
            return Err(Error::data(format!(
                "location {out} outside the window [0, {domain_length}]"
            )));
        }
        let mut order: Vec<usize> = (0..locations.len()).collect();
        order.sort_by(|&a, &b| locations[a].total_cmp(&locations[b]));
        Ok(SampleSet {
            locations: order.iter().map(|&i| locations[i]).collect(),
            values: order.iter().map(|&i| values[i]).collect(),
            domain_length,
        })
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. uniform positions on `[0, domain_length)`, sorted.
pub fn draw_locations(n: usize, domain_length: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::parameter(format!("need at least 2 locations, got {n}")));
    }
    if !(domain_length > 0.0 && domain_length.is_finite()) {
        return Err(Error::parameter(format!(
            "domain length must be positive, got {domain_length}"
        )));
    }
    let mut rng = rng_for(seed, 0);
    let mut s: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * domain_length)
        .collect();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Covariance matrix `Σ_ij = C(|s_i - s_j|)`.
pub fn covariance_matrix(locations: &[f64], cov: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = locations.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = cov(locations[i] - locations[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Lower Cholesky factor of the model covariance at `locations`, retrying
/// once with a `1e-10·σ²` diagonal jitter.
pub fn model_cholesky(model: &CovarianceModel, locations: &[f64]) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let sigma = covariance_matrix(locations, |h| model.covariance(h));
    if let Some(c) = Cholesky::new(sigma.clone()) {
        return Ok(c);
    }
    let jitter = 1e-10 * model.sigma2;
    log::warn!("covariance matrix not positive definite; retrying with jitter {jitter:e}");
    let n = locations.len();
    Cholesky::new(sigma + DMatrix::identity(n, n) * jitter).ok_or_else(|| {
        Error::numerical(format!(
            "model covariance matrix of size {n} is not positive definite even with jitter {jitter:e}"
        ))
    })
}

/// One draw from `N(0, Σ)` at the given (pairwise distinct) locations.
pub fn simulate_gp(
    model: &CovarianceModel,
    locations: &[f64],
    domain_length: f64,
    seed: u64,
) -> Result<SampleSet> {
    model.validate()?;
    let chol = model_cholesky(model, locations)?;
    let mut rng = rng_for(seed, 1);
    let z = DVector::from_iterator(
        locations.len(),
        (0..locations.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let x = chol.l() * z;
    SampleSet::new(locations.to_vec(), x.iter().copied().collect(), domain_length)
}

/// Locations and values from one seed: the full sampling design.
pub fn simulate_sample(
    model: &CovarianceModel,
    n: usize,
    domain_length: f64,
    seed: u64,
) -> Result<SampleSet> {
    let locations = draw_locations(n, domain_length, seed)?;
    simulate_gp(model, &locations, domain_length, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn locations_are_sorted_and_reproducible() {
        let a = draw_locations(250, 250.0, 1).unwrap();
        assert_eq!(a.len(), 250);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&s| (0.0..250.0).contains(&s)));
        assert_eq!(a, draw_locations(250, 250.0, 1).unwrap());
        assert_ne!(a, draw_locations(250, 250.0, 2).unwrap());
        let two = draw_locations(2, 1.0, 9).unwrap();
        assert!(two[0] <= two[1] && two[1] < 1.0);
        assert!(draw_locations(1, 1.0, 0).is_err());
    }

    #[test]
    fn uniform_mean() {
        let s = draw_locations(10_000, 1.0, 7).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert_abs_diff_eq!(mean, 0.5, epsilon = 0.01);
    }

    #[test]
    fn sample_set_sorts_consistently() {
        let s = SampleSet::new(vec![2.0, 0.5, 1.0], vec![20.0, 5.0, 10.0], 3.0).unwrap();
        assert_eq!(s.locations(), &[0.5, 1.0, 2.0]);
        assert_eq!(s.values(), &[5.0, 10.0, 20.0]);
        assert!(SampleSet::new(vec![4.0], vec![1.0], 3.0).is_err());
        assert!(SampleSet::new(vec![1.0], vec![], 3.0).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = CovarianceModel::exponential(1.0, 1.0).unwrap();
        let a = simulate_sample(&m, 50, 50.0, 3).unwrap();
        let b = simulate_sample(&m, 50, 50.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let m = CovarianceModel::spherical(1.0, 1.0).unwrap();
        let locs = draw_locations(200, 100.0, 11).unwrap();
        let chol = model_cholesky(&m, &locs).unwrap();
        let l = chol.l();
        let rebuilt = &l * l.transpose();
        let sigma = covariance_matrix(&locs, |h| m.covariance(h));
        assert!((rebuilt - sigma).abs().max() < 1e-8);
    }

    #[test]
    fn marginal_variance_and_correlation() {
        let m = CovarianceModel::exponential(1.0, 1.0).unwrap();
        let locs = [0.3, 1.3, 5.0];
        let (mut v, mut c) = (0.0, 0.0);
        let reps = 2000;
        for seed in 0..reps {
            let s = simulate_gp(&m, &locs, 6.0, seed).unwrap();
            let x = s.values();
            v += x[0] * x[0];
            c += x[0] * x[1];
        }
        let v = v / reps as f64;
        let c = c / reps as f64;
        assert_abs_diff_eq!(v, 1.0, epsilon = 0.07);
        assert_abs_diff_eq!(c, (-1.0f64).exp(), epsilon = 0.05);
    }
}
