//! Monte Carlo comparison of the HHC, YZ and parametric Matérn estimators:
//! simulate, estimate, score by ISE(f), ISE(C) and the kriging IPE, then
//! summarize by medians.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aliasing::{assemble, SpectralEstimate, YzCovariance};
use crate::decay::{default_schedule, empirical_variogram, fit_alpha0, LagSchedule, VariogramTriples};
use crate::error::{Error, Result};
use crate::gridize::{accumulate_lag_sums, default_cutoff, GridSpec};
use crate::kriging::{median, prediction_targets, CovarianceTable, SimpleKriging};
use crate::models::{matern_correlation, CovarianceModel, ModelKind};
use crate::quadrature::simpson;
use crate::simulate::{simulate_sample, SampleSet};
use crate::spline_spectral::{lambda_grid, select_lambda_gcv, GcvChoice, SplineSpectral};

pub const ISE_F_PANELS: usize = 2048;
pub const ISE_C_PANELS: usize = 4096;
pub const ISE_C_RANGE: f64 = 100.0;
/// Step of the tabulated YZ covariance used for kriging.
pub const KRIGING_TABLE_STEP: f64 = 1.0 / 32.0;
/// Lags below this are evaluated exactly rather than interpolated.
pub const KRIGING_EXACT_BELOW: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hhc,
    Yz,
    Matern,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hhc => "hhc",
            Method::Yz => "yz",
            Method::Matern => "matern",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hhc" => Ok(Method::Hhc),
            "yz" => Ok(Method::Yz),
            "matern" => Ok(Method::Matern),
            other => Err(Error::parameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Cutoff frequency: `"auto"` (ρπ) or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "CutoffRepr", into = "CutoffRepr")]
pub enum Cutoff {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CutoffRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<CutoffRepr> for Cutoff {
    type Error = String;
    fn try_from(r: CutoffRepr) -> std::result::Result<Self, String> {
        match r {
            CutoffRepr::Number(v) if v > 0.0 && v.is_finite() => Ok(Cutoff::Fixed(v)),
            CutoffRepr::Number(v) => Err(format!("cutoff must be positive, got {v}")),
            CutoffRepr::Word(w) if w.eq_ignore_ascii_case("auto") => Ok(Cutoff::Auto),
            CutoffRepr::Word(w) => Err(format!("cutoff must be \"auto\" or a number, got \"{w}\"")),
        }
    }
}

impl From<Cutoff> for CutoffRepr {
    fn from(c: Cutoff) -> Self {
        match c {
            Cutoff::Auto => CutoffRepr::Word("auto".into()),
            Cutoff::Fixed(v) => CutoffRepr::Number(v),
        }
    }
}

impl std::str::FromStr for Cutoff {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Cutoff::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::parameter(format!("cutoff must be \"auto\" or a number, got '{s}'")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::parameter(format!("cutoff must be positive, got {v}")));
        }
        Ok(Cutoff::Fixed(v))
    }
}

impl Cutoff {
    pub fn resolve(self, sample: &SampleSet) -> Result<f64> {
        match self {
            Cutoff::Auto => default_cutoff(sample),
            Cutoff::Fixed(v) => Ok(v),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Hhc, Method::Yz, Method::Matern]
}

fn default_n_pred() -> usize {
    100
}

/// Knobs shared by the estimators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default)]
    pub omega_c: Cutoff,
    /// candidate λ values; default 40 log-spaced on `[1/N, N]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// largest variogram lag; default `domain_length/1000`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    /// cap on the number of lag classes
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: CovarianceModel,
    pub n: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// observation window length; default `n` (unit sampling rate)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_length: Option<f64>,
    #[serde(default, flatten)]
    pub estimator: EstimatorSettings,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_n_pred")]
    pub n_pred: usize,
    /// divide each IPE by the true kriging variance
    #[serde(default)]
    pub normalize_ipe: bool,
    /// dump estimated curves for this many leading replicates
    #[serde(default)]
    pub curve_replicates: usize,
}

impl ExperimentConfig {
    pub fn new(model: CovarianceModel, n: usize, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            model,
            n,
            replicates,
            seed,
            domain_length: None,
            estimator: EstimatorSettings::default(),
            methods: default_methods(),
            n_pred: default_n_pred(),
            normalize_ipe: false,
            curve_replicates: 0,
        }
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length.unwrap_or(self.n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replicates < 1 {
            return Err(Error::parameter("replicates must be at least 1"));
        }
        if self.n < 8 {
            return Err(Error::parameter(format!("n must be at least 8, got {}", self.n)));
        }
        if self.methods.is_empty() {
            return Err(Error::parameter("no estimation methods selected"));
        }
        if self.n_pred < 1 {
            return Err(Error::parameter("n_pred must be at least 1"));
        }
        let l = self.domain_length();
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::parameter(format!("domain length must be positive, got {l}")));
        }
        Ok(())
    }
}

/// HHC fit with the quantities reported alongside it.
#[derive(Debug, Clone)]
pub struct HhcFit {
    pub spline: SplineSpectral,
    pub gcv: GcvChoice,
    pub grid: GridSpec,
}

pub fn fit_hhc(sample: &SampleSet, settings: &EstimatorSettings) -> Result<HhcFit> {
    let omega_c = settings.omega_c.resolve(sample)?;
    let grid = GridSpec::new(omega_c, sample.domain_length())?;
    let sums = accumulate_lag_sums(sample, &grid, settings.k_max);
    let candidates = settings
        .lambda_grid
        .clone()
        .unwrap_or_else(|| lambda_grid(sample.len(), 40));
    let gcv = select_lambda_gcv(&sums, &candidates)?;
    let spline = SplineSpectral::new(sums, omega_c, gcv.lambda)?;
    Ok(HhcFit { spline, gcv, grid })
}

#[derive(Debug, Clone)]
pub struct YzFit {
    pub hhc: HhcFit,
    pub schedule: LagSchedule,
    pub variogram: VariogramTriples,
    pub estimate: SpectralEstimate,
}

pub fn fit_yz(sample: &SampleSet, settings: &EstimatorSettings) -> Result<YzFit> {
    let hhc = fit_hhc(sample, settings)?;
    let schedule = default_schedule(sample, settings.h_max)?;
    let variogram = empirical_variogram(sample, &schedule)?;
    let decay = fit_alpha0(&variogram)?;
    let estimate = assemble(hhc.spline.clone(), decay)?;
    Ok(YzFit {
        hhc,
        schedule,
        variogram,
        estimate,
    })
}

/// `∫₀^{ω_c} (f̂ - f)²` by composite Simpson.
pub fn ise_f(estimate: impl Fn(f64) -> f64, truth: impl Fn(f64) -> f64, omega_c: f64) -> f64 {
    simpson(|w| (estimate(w) - truth(w)).powi(2), 0.0, omega_c, ISE_F_PANELS)
}

/// `∫₀^{100} (Ĉ - C)²` by composite Simpson.
pub fn ise_c(estimate: impl Fn(f64) -> f64, truth: impl Fn(f64) -> f64) -> f64 {
    simpson(|h| (estimate(h) - truth(h)).powi(2), 0.0, ISE_C_RANGE, ISE_C_PANELS)
}

/// Lags of the ISE(C) grid, `h_j = 100 j / 4096`.
pub fn ise_c_grid() -> Vec<f64> {
    (0..=ISE_C_PANELS)
        .map(|j| ISE_C_RANGE * j as f64 / ISE_C_PANELS as f64)
        .collect()
}

/// Simpson sum of `(a_j - b_j)²` over the ISE(C) grid, for precomputed values.
pub fn ise_c_from_values(estimate: &[f64], truth: &[f64]) -> f64 {
    let w = crate::quadrature::simpson_weights(0.0, ISE_C_RANGE, ISE_C_PANELS);
    w.iter()
        .zip(estimate.iter().zip(truth))
        .map(|(w, (a, b))| w * (a - b).powi(2))
        .sum()
}

// ---------------------------------------------------------------------------
// Matérn maximum likelihood

/// Cholesky factor of a symmetric matrix stored densely, computed only
/// inside its envelope (row `i` is zero before column `first[i]`).
struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    l: Vec<f64>,
}

impl EnvelopeCholesky {
    /// `entry(i, j)` gives `A_ij` for `j ≤ i` inside the envelope.
    fn factor(n: usize, first: Vec<usize>, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j].max(fi);
                let (ri, rj) = (&l[i * n..], &l[j * n..]);
                let dot: f64 = ri[fj..j].iter().zip(&rj[fj..j]).map(|(a, b)| a * b).sum();
                let v = entry(i, j) - dot;
                if i == j {
                    if !(v > 0.0) {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(EnvelopeCholesky { n, first, l })
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// `‖L⁻¹x‖²`, i.e. `xᵀA⁻¹x`.
    fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.l[i * n..];
            let dot: f64 = row[fi..i].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (x[i] - dot) / row[i];
        }
        y.iter().map(|v| v * v).sum()
    }
}

/// Bounds of the likelihood search; see `fit_matern_mle`.
#[derive(Debug, Clone, Copy)]
pub struct MaternBounds {
    pub sigma2: (f64, f64),
    pub range: (f64, f64),
    pub nu: (f64, f64),
}

impl MaternBounds {
    pub fn for_domain(domain_length: f64) -> Self {
        let scale = domain_length / 10.0;
        MaternBounds {
            sigma2: (1e-3, 1e3),
            range: (1e-2 * scale, 10.0 * scale),
            nu: (0.1, 5.0),
        }
    }
}

/// Gaussian negative log-likelihood with σ² profiled out, up to the
/// constant `N/2 (1 + ln 2π)`. Returns the profiled σ² alongside.
pub fn matern_profile_nll(sample: &SampleSet, range: f64, nu: f64, sigma2_bounds: (f64, f64)) -> Option<(f64, f64)> {
    let s = sample.locations();
    let n = s.len();
    // correlations below e^{-50} are dropped, which bounds the envelope
    let mut reach = range;
    while (nu - 0.5) * (reach / range).ln() - reach / range > -50.0 {
        reach *= 1.25;
    }
    let mut first = vec![0; n];
    let mut j = 0;
    for i in 0..n {
        while s[i] - s[j] > reach {
            j += 1;
        }
        first[i] = j;
    }
    let chol = EnvelopeCholesky::factor(n, first, |i, j| {
        matern_correlation((s[i] - s[j]) / range, nu)
    })?;
    let q = chol.quad_form(sample.values());
    let sigma2 = (q / n as f64).clamp(sigma2_bounds.0, sigma2_bounds.1);
    let nll = 0.5 * (n as f64 * sigma2.ln() + chol.log_det() + q / sigma2);
    nll.is_finite().then_some((nll, sigma2))
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadResult {
    pub x: [f64; 2],
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead on two variables with standard coefficients.
pub fn nelder_mead_2d(
    mut f: impl FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    step: f64,
    max_evals: usize,
    f_tol: f64,
) -> NelderMeadResult {
    let mut pts = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut vals = pts.map(&mut f);
    let mut evals = 3;
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    loop {
        // order best to worst
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        let spread = vals[2] - vals[0];
        if spread.is_finite() && spread <= f_tol * (1.0 + vals[0].abs()) {
            return NelderMeadResult {
                x: pts[0],
                value: vals[0],
                evaluations: evals,
                converged: true,
            };
        }
        if evals >= max_evals {
            return NelderMeadResult {
                x: pts[0],
                value: vals[0],
                evaluations: evals,
                converged: false,
            };
        }
        let centroid = lerp(pts[0], pts[1], 0.5);
        let reflected = lerp(centroid, pts[2], -1.0);
        let fr = f(reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = lerp(centroid, pts[2], -2.0);
            let fe = f(expanded);
            evals += 1;
            if fe < fr {
                pts[2] = expanded;
                vals[2] = fe;
            } else {
                pts[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            pts[2] = reflected;
            vals[2] = fr;
        } else {
            let (target, ft) = if fr < vals[2] { (reflected, fr) } else { (pts[2], vals[2]) };
            let contracted = lerp(centroid, target, 0.5);
            let fc = f(contracted);
            evals += 1;
            if fc < ft {
                pts[2] = contracted;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    pts[i] = lerp(pts[0], pts[i], 0.5);
                    vals[i] = f(pts[i]);
                    evals += 1;
                }
            }
        }
    }
}

/// Matérn fit by maximum likelihood.
#[derive(Debug, Clone, Copy)]
pub struct MaternFit {
    pub model: CovarianceModel,
    pub neg_log_likelihood: f64,
    pub evaluations: usize,
}

/// Maximizes the Gaussian likelihood over (σ², φ, ν). σ² is profiled out in
/// closed form; (φ, ν) are searched by Nelder–Mead in coordinates mapping
/// the real line smoothly onto the log-scale bounds. Starts at
/// φ = domain_length/10 and ν = 1/2.
pub fn fit_matern_mle(sample: &SampleSet) -> Result<MaternFit> {
    if sample.len() < 8 {
        return Err(Error::data(format!(
            "Matérn fit needs at least 8 observations, got {}",
            sample.len()
        )));
    }
    let mean_sq = sample.values().iter().map(|x| x * x).sum::<f64>() / sample.len() as f64;
    if !(mean_sq > 0.0) {
        return Err(Error::estimation("Matérn fit: observations are identically zero"));
    }
    let b = MaternBounds::for_domain(sample.domain_length());
    let to_param = |u: f64, (lo, hi): (f64, f64)| {
        let p = 1.0 / (1.0 + (-u).exp());
        (lo.ln() + p * (hi / lo).ln()).exp()
    };
    let from_param = |v: f64, (lo, hi): (f64, f64)| {
        let p = (v / lo).ln() / (hi / lo).ln();
        (p / (1.0 - p)).ln()
    };
    let objective = |u: [f64; 2]| {
        let range = to_param(u[0], b.range);
        let nu = to_param(u[1], b.nu);
        matern_profile_nll(sample, range, nu, b.sigma2).map_or(f64::INFINITY, |r| r.0)
    };
    let start = [
        from_param(sample.domain_length() / 10.0, b.range),
        from_param(0.5, b.nu),
    ];
    let res = nelder_mead_2d(objective, start, 1.0, 400, 1e-10);
    if !res.converged || !res.value.is_finite() {
        return Err(Error::estimation(format!(
            "Matérn likelihood search did not converge after {} evaluations (best {})",
            res.evaluations, res.value
        )));
    }
    let range = to_param(res.x[0], b.range);
    let nu = to_param(res.x[1], b.nu);
    let (_, sigma2) = matern_profile_nll(sample, range, nu, b.sigma2)
        .ok_or_else(|| Error::numerical("Matérn likelihood failed at its optimum"))?;
    Ok(MaternFit {
        model: CovarianceModel::new(ModelKind::Matern, sigma2, range, nu)?,
        neg_log_likelihood: res.value,
        evaluations: res.evaluations,
    })
}

// ---------------------------------------------------------------------------
// Experiment

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetailRow {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub ok: bool,
    pub ise_f: f64,
    pub ise_c: f64,
    /// median IPE over this replicate's targets
    pub mipe: f64,
    pub lambda: f64,
    pub gamma_hat: f64,
    pub tail_scale: f64,
    pub jitter: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IpeRow {
    pub replicate: usize,
    pub method: Method,
    pub target: f64,
    pub ipe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub method: Method,
    pub ise_f: f64,
    pub ise_c: f64,
    pub mipe: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub replicate: usize,
    pub curve: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub summary: Vec<SummaryRow>,
    pub details: Vec<DetailRow>,
    pub ipe: Vec<IpeRow>,
    pub curves: Vec<CurvePoint>,
}

struct MethodScore {
    ise_f: f64,
    ise_c: f64,
    ipe: Vec<f64>,
    lambda: f64,
    gamma_hat: f64,
    tail_scale: f64,
    jitter: f64,
    curves: Vec<(String, f64, f64)>,
}

/// Context shared by all methods of one replicate.
struct Replicate<'a> {
    config: &'a ExperimentConfig,
    sample: SampleSet,
    targets: Vec<f64>,
    truth_pred: Vec<f64>,
    truth_var: Vec<f64>,
    truth_c: Vec<f64>,
    dump_curves: bool,
}

fn spectral_curve_grid(omega_c: f64) -> Vec<f64> {
    (0..=400).map(|i| 2.0 * omega_c * i as f64 / 400.0).collect()
}

impl Replicate<'_> {
    fn kriging_ipe(&self, cov: &dyn Fn(f64) -> f64, name: &str) -> Result<(Vec<f64>, f64)> {
        let k = SimpleKriging::fit(&self.sample, cov, name)?;
        let mut out = Vec::with_capacity(self.targets.len());
        for (i, &t) in self.targets.iter().enumerate() {
            let p = k.predict(t, cov);
            if !p.is_finite() {
                return Err(Error::numerical(format!("{name} kriging produced prediction {p}")));
            }
            let mut d = (p - self.truth_pred[i]).powi(2);
            if self.config.normalize_ipe {
                d /= self.truth_var[i];
            }
            out.push(d);
        }
        Ok((out, k.jitter_level()))
    }

    fn score(&self, method: Method) -> Result<MethodScore> {
        let settings = &self.config.estimator;
        let model = &self.config.model;
        let truth_f = |w: f64| model.spectral_density(w);
        let omega_c = settings.omega_c.resolve(&self.sample)?;
        let mut curves = Vec::new();
        match method {
            Method::Hhc => {
                let fit = fit_hhc(&self.sample, settings)?;
                let sp = &fit.spline;
                let est_c: Vec<f64> = ise_c_grid().iter().map(|&h| sp.hhc_covariance(h)).collect();
                let cov = |h: f64| sp.hhc_covariance(h);
                let (ipe, jitter) = self.kriging_ipe(&cov, "HHC")?;
                if self.dump_curves {
                    for w in spectral_curve_grid(omega_c) {
                        if w <= omega_c {
                            curves.push(("f_hhc".to_string(), w, sp.eval_f_delta(w)));
                        }
                    }
                    for (h, c) in ise_c_grid().iter().zip(&est_c).step_by(16) {
                        curves.push(("c_hhc".to_string(), *h, *c));
                    }
                }
                Ok(MethodScore {
                    ise_f: ise_f(|w| sp.eval_f_delta(w), truth_f, omega_c),
                    ise_c: ise_c_from_values(&est_c, &self.truth_c),
                    ipe,
                    lambda: sp.lambda(),
                    gamma_hat: f64::NAN,
                    tail_scale: f64::NAN,
                    jitter,
                    curves,
                })
            }
            Method::Yz => {
                let fit = fit_yz(&self.sample, settings)?;
                let est = &fit.estimate;
                let length = self.sample.domain_length();
                let reach = length.max(ISE_C_RANGE) + 1.0;
                let fast = YzCovariance::new(est, reach)?;
                let est_c = fast.eval_grid(ISE_C_RANGE / ISE_C_PANELS as f64, ISE_C_PANELS + 1)?;
                let steps = (length / KRIGING_TABLE_STEP).ceil() as usize + 4;
                let table_vals = fast.eval_grid(KRIGING_TABLE_STEP, steps)?;
                let exact = |h: f64| fast.eval(h).unwrap_or(f64::NAN);
                let table = CovarianceTable::new(KRIGING_TABLE_STEP, table_vals, KRIGING_EXACT_BELOW, &exact)?;
                let cov = |h: f64| table.eval(h);
                let (ipe, jitter) = self.kriging_ipe(&cov, "YZ")?;
                if self.dump_curves {
                    for w in spectral_curve_grid(omega_c) {
                        curves.push(("f_yz".to_string(), w, est.eval_yz_positive(w)));
                    }
                    for (h, c) in ise_c_grid().iter().zip(&est_c).step_by(16) {
                        curves.push(("c_yz".to_string(), *h, *c));
                    }
                }
                Ok(MethodScore {
                    ise_f: ise_f(|w| est.eval_yz_positive(w), truth_f, omega_c),
                    ise_c: ise_c_from_values(&est_c, &self.truth_c),
                    ipe,
                    lambda: est.spline().lambda(),
                    gamma_hat: est.gamma_hat(),
                    tail_scale: est.tail_scale(),
                    jitter,
                    curves,
                })
            }
            Method::Matern => {
                let fit = fit_matern_mle(&self.sample)?;
                let m = fit.model;
                let cov = |h: f64| m.covariance(h);
                let est_c: Vec<f64> = ise_c_grid().iter().map(|&h| m.covariance(h)).collect();
                let (ipe, jitter) = self.kriging_ipe(&cov, "Matérn")?;
                if self.dump_curves {
                    for w in spectral_curve_grid(omega_c) {
                        curves.push(("f_matern".to_string(), w, m.spectral_density(w)));
                    }
                    for (h, c) in ise_c_grid().iter().zip(&est_c).step_by(16) {
                        curves.push(("c_matern".to_string(), *h, *c));
                    }
                }
                Ok(MethodScore {
                    ise_f: ise_f(|w| m.spectral_density(w), truth_f, omega_c),
                    ise_c: ise_c_from_values(&est_c, &self.truth_c),
                    ipe,
                    lambda: f64::NAN,
                    gamma_hat: m.nu + 1.0,
                    tail_scale: f64::NAN,
                    jitter,
                    curves,
                })
            }
        }
    }
}

struct ReplicateOutput {
    details: Vec<DetailRow>,
    ipe: Vec<IpeRow>,
    curves: Vec<CurvePoint>,
}

fn run_replicate(config: &ExperimentConfig, j: usize) -> Result<ReplicateOutput> {
    let seed = config.seed.wrapping_add(j as u64);
    let length = config.domain_length();
    let sample = simulate_sample(&config.model, config.n, length, seed)?;
    let targets = prediction_targets(length, config.n_pred)?;
    let model = config.model;
    let true_cov = |h: f64| model.covariance(h);
    let truth = SimpleKriging::fit(&sample, &true_cov, "true")?;
    let truth_pred = targets.iter().map(|&t| truth.predict(t, &true_cov)).collect();
    let truth_var = if config.normalize_ipe {
        targets.iter().map(|&t| truth.variance(t, &true_cov)).collect()
    } else {
        Vec::new()
    };
    let truth_c = ise_c_grid().iter().map(|&h| model.covariance(h)).collect();
    let rep = Replicate {
        config,
        sample,
        targets,
        truth_pred,
        truth_var,
        truth_c,
        dump_curves: j < config.curve_replicates,
    };

    let mut out = ReplicateOutput {
        details: Vec::new(),
        ipe: Vec::new(),
        curves: Vec::new(),
    };
    if rep.dump_curves {
        let omega_c = config.estimator.omega_c.resolve(&rep.sample)?;
        for w in spectral_curve_grid(omega_c) {
            out.curves.push(CurvePoint {
                replicate: j,
                curve: "f_true".into(),
                x: w,
                y: model.spectral_density(w),
            });
        }
        for (h, c) in ise_c_grid().iter().zip(&rep.truth_c).step_by(16) {
            out.curves.push(CurvePoint {
                replicate: j,
                curve: "c_true".into(),
                x: *h,
                y: *c,
            });
        }
    }
    for &method in &config.methods {
        match rep.score(method) {
            Ok(s) => {
                out.details.push(DetailRow {
                    replicate: j,
                    seed,
                    method,
                    ok: true,
                    ise_f: s.ise_f,
                    ise_c: s.ise_c,
                    mipe: median(&s.ipe).unwrap_or(f64::NAN),
                    lambda: s.lambda,
                    gamma_hat: s.gamma_hat,
                    tail_scale: s.tail_scale,
                    jitter: s.jitter,
                    message: String::new(),
                });
                out.ipe.extend(rep.targets.iter().zip(&s.ipe).map(|(&t, &v)| IpeRow {
                    replicate: j,
                    method,
                    target: t,
                    ipe: v,
                }));
                out.curves.extend(s.curves.into_iter().map(|(curve, x, y)| CurvePoint {
                    replicate: j,
                    curve,
                    x,
                    y,
                }));
            }
            Err(e) => {
                log::warn!("replicate {j} ({}): {e}", method.name());
                out.details.push(DetailRow {
                    replicate: j,
                    seed,
                    method,
                    ok: false,
                    ise_f: f64::NAN,
                    ise_c: f64::NAN,
                    mipe: f64::NAN,
                    lambda: f64::NAN,
                    gamma_hat: f64::NAN,
                    tail_scale: f64::NAN,
                    jitter: f64::NAN,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Runs every replicate (in parallel on the current rayon pool) and
/// summarizes by medians. Output order is fixed by replicate index, so the
/// result does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let outputs: Vec<Result<ReplicateOutput>> = (0..config.replicates)
        .into_par_iter()
        .map(|j| run_replicate(config, j))
        .collect();
    let mut result = ExperimentResult::default();
    for o in outputs {
        let o = o?;
        result.details.extend(o.details);
        result.ipe.extend(o.ipe);
        result.curves.extend(o.curves);
    }
    for &method in &config.methods {
        let rows: Vec<&DetailRow> = result
            .details
            .iter()
            .filter(|r| r.method == method && r.ok)
            .collect();
        let failed = result
            .details
            .iter()
            .filter(|r| r.method == method && !r.ok)
            .count();
        let pooled: Vec<f64> = result
            .ipe
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.ipe)
            .collect();
        let med = |xs: Vec<f64>| median(&xs).unwrap_or(f64::NAN);
        result.summary.push(SummaryRow {
            n: config.n,
            method,
            ise_f: med(rows.iter().map(|r| r.ise_f).collect()),
            ise_c: med(rows.iter().map(|r| r.ise_c).collect()),
            mipe: med(pooled),
            succeeded: rows.len(),
            failed,
        });
    }
    Ok(result)
}

/// Spectral density of the model at the cutoff grid, for quick reporting.
pub fn nyquist_cutoff(n: usize, domain_length: f64) -> f64 {
    n as f64 / domain_length * PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ise_examples() {
        let f = |w: f64| (-w).exp() + w * w;
        assert_eq!(ise_f(f, f, 3.0), 0.0);
        assert_abs_diff_eq!(ise_f(|w| f(w) + 0.3, f, 3.0), 0.09 * 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ise_c(|h| (-h).exp() + 0.1, |h| (-h).exp()), 1.0, epsilon = 1e-10);
        // against adaptive quadrature
        let a = |w: f64| (3.0 * w).sin() / (1.0 + w);
        let b = |w: f64| 0.5 * (-w * w).exp();
        let reference = integrate(|w| (a(w) - b(w)).powi(2), 0.0, PI, Tolerance::default())
            .unwrap()
            .value;
        assert_abs_diff_eq!(ise_f(a, b, PI), reference, epsilon = 1e-6);
        let reference_c = integrate(|h| (a(h) - b(h)).powi(2), 0.0, 100.0, Tolerance::default())
            .unwrap()
            .value;
        assert_abs_diff_eq!(ise_c(a, b), reference_c, epsilon = 1e-6);
        let ga: Vec<f64> = ise_c_grid().iter().map(|&h| a(h)).collect();
        let gb: Vec<f64> = ise_c_grid().iter().map(|&h| b(h)).collect();
        assert_abs_diff_eq!(ise_c_from_values(&ga, &gb), ise_c(a, b), epsilon = 1e-12);
    }

    #[test]
    fn cutoff_parsing() {
        let c: Cutoff = toml::from_str::<toml::Table>("x = \"auto\"").unwrap()["x"]
            .clone()
            .try_into()
            .unwrap();
        assert_eq!(c, Cutoff::Auto);
        let c: Cutoff = toml::Value::Float(2.5).try_into().unwrap();
        assert_eq!(c, Cutoff::Fixed(2.5));
        assert!("fast".parse::<Cutoff>().is_err());
        assert_eq!("3".parse::<Cutoff>().unwrap(), Cutoff::Fixed(3.0));
    }

    #[test]
    fn config_from_toml() {
        let text = r#"
            n = 250
            replicates = 3
            seed = 7
            omega_c = "auto"
            methods = ["hhc", "yz"]
            [model]
            kind = "matern"
            sigma2 = 1.0
            range = 1.0
            nu = 0.5
        "#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.methods, vec![Method::Hhc, Method::Yz]);
        assert_eq!(c.domain_length(), 250.0);
        assert_eq!(c.n_pred, 100);
        c.validate().unwrap();
        assert!(toml::from_str::<ExperimentConfig>("n = 5\nreplicates=1\nbogus=1\n[model]\nkind=\"matern\"\nsigma2=1\nrange=1").is_err());
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let r = nelder_mead_2d(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            [-1.2, 1.0],
            0.5,
            2000,
            1e-14,
        );
        assert!(r.converged);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 2e-3);
    }

    #[test]
    fn profile_likelihood_matches_dense_formula() {
        let m = CovarianceModel::matern(1.0, 1.0, 0.8).unwrap();
        let s = simulate_sample(&m, 60, 30.0, 3).unwrap();
        let (nll, sigma2) = matern_profile_nll(&s, 1.3, 0.8, (1e-3, 1e3)).unwrap();
        let sig = crate::simulate::covariance_matrix(s.locations(), |h| matern_correlation(h.abs() / 1.3, 0.8));
        let chol = nalgebra::Cholesky::new(sig).unwrap();
        let x = nalgebra::DVector::from_column_slice(s.values());
        let q = x.dot(&chol.solve(&x));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        assert_abs_diff_eq!(sigma2, q / 60.0, epsilon = 1e-10);
        let expected = 0.5 * (60.0 * sigma2.ln() + logdet + q / sigma2);
        assert!((nll - expected).abs() < 1e-8 * expected.abs().max(1.0));
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let locs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = SampleSet::new(locs, vec![0.0; 10], 10.0).unwrap();
        assert!(fit_matern_mle(&s).is_err());
    }

    #[test]
    fn single_replicate_summary_equals_detail() {
        let mut c = ExperimentConfig::new(CovarianceModel::exponential(1.0, 1.0).unwrap(), 60, 1, 11);
        c.methods = vec![Method::Hhc];
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.details.len(), 1);
        let (d, s) = (&r.details[0], &r.summary[0]);
        assert!(d.ok);
        assert_eq!(d.ise_f, s.ise_f);
        assert_eq!(d.ise_c, s.ise_c);
        assert_eq!(d.mipe, s.mipe);
        assert_eq!(r.ipe.len(), 100);
    }

    #[test]
    fn failed_fits_are_counted() {
        // a cutoff far above the sampling rate leaves most lag classes empty
        // and a tiny window makes the variogram schedule collapse
        let mut c = ExperimentConfig::new(CovarianceModel::exponential(1.0, 1.0).unwrap(), 10, 2, 1);
        c.methods = vec![Method::Yz];
        c.estimator.h_max = Some(1e-9);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.summary[0].failed, 2);
        assert!(r.summary[0].ise_f.is_nan());
        assert!(r.details.iter().all(|d| !d.ok && !d.message.is_empty()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ise_is_symmetric(a in -2.0f64..2.0, b in 0.1f64..3.0) {
            let f = |w: f64| a * (-b * w).exp();
            let g = |w: f64| (w * b).cos();
            prop_assert_eq!(ise_f(f, g, 2.0), ise_f(g, f, 2.0));
            prop_assert_eq!(ise_c(f, g), ise_c(g, f));
        }
    }
}
