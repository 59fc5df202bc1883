//! Command-line front end: `simulate`, `estimate`, `krige`, `benchmark`.
//!
//! Exit codes: 0 success, 2 usage or parameter error, 3 data error,
//! 4 estimation or numerical failure. Errors go to standard error as one
//! JSON object per line.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::aliasing::{assemble, YzCovariance};
use crate::bench::{
    fit_hhc, fit_yz, run_experiment, Cutoff, EstimatorSettings, ExperimentConfig, Method,
    KRIGING_EXACT_BELOW, KRIGING_TABLE_STEP,
};
use crate::decay::{DecayEstimate, VariogramTriples};
use crate::error::{Error, Result};
use crate::gridize::{accumulate_lag_sums, GridSpec};
use crate::io;
use crate::kriging::{prediction_targets, CovarianceTable, SimpleKriging};
use crate::models::{CovarianceModel, ModelKind};
use crate::simulate::{simulate_sample, SampleSet};
use crate::spline_spectral::SplineSpectral;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IRREGSPEC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "irregspec", version, about = "Spectral density estimation for irregularly spaced 1-D Gaussian processes")]
pub struct Cli {
    /// Base random seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file, or a manifest from an earlier run
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving all outputs
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw uniform locations and a Gaussian process sample
    Simulate(SimulateArgs),
    /// Estimate the spectral density of a sample
    Estimate(EstimateArgs),
    /// Simple kriging with an estimated or parametric covariance
    Krige(KrigeArgs),
    /// Monte Carlo comparison of the estimators
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelArgs {
    /// matern, exponential or spherical
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub range: Option<f64>,
    /// Matérn smoothness
    #[arg(long)]
    pub nu: Option<f64>,
}

impl ModelArgs {
    fn given(&self) -> bool {
        self.model.is_some() || self.sigma2.is_some() || self.range.is_some() || self.nu.is_some()
    }

    /// Flags override `base`, which defaults to the unit exponential.
    fn resolve(&self, base: Option<CovarianceModel>) -> Result<CovarianceModel> {
        let b = base.unwrap_or(CovarianceModel {
            kind: ModelKind::Matern,
            sigma2: 1.0,
            range: 1.0,
            nu: 0.5,
        });
        CovarianceModel::new(
            self.model.unwrap_or(b.kind),
            self.sigma2.unwrap_or(b.sigma2),
            self.range.unwrap_or(b.range),
            self.nu.unwrap_or(b.nu),
        )
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of observations
    #[arg(long)]
    pub n: Option<usize>,
    /// Window length (default n)
    #[arg(long)]
    pub domain_length: Option<f64>,
    /// Output CSV name inside the output directory
    #[arg(long, default_value = "sample.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sample CSV with header `s,x`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "yz")]
    pub method: EstimateMethod,
    /// Window length (default ceil of the largest location)
    #[arg(long)]
    pub domain_length: Option<f64>,
    /// Cutoff frequency, a number or `auto`
    #[arg(long)]
    pub omega_c: Option<Cutoff>,
    /// Fixed smoothing parameter instead of GCV
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Largest variogram lag
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Cap on the number of lag classes
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Number of frequencies in the output grid
    #[arg(long, default_value_t = 513)]
    pub grid_points: usize,
    /// Largest output frequency (default ω_c for hhc, 2ω_c for yz)
    #[arg(long)]
    pub grid_max: Option<f64>,
    /// Output CSV name; the JSON sidecar shares its stem
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the variogram triples as CSV (yz only)
    #[arg(long)]
    pub variogram_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EstimateMethod {
    Hhc,
    Yz,
}

impl From<EstimateMethod> for Method {
    fn from(m: EstimateMethod) -> Self {
        match m {
            EstimateMethod::Hhc => Method::Hhc,
            EstimateMethod::Yz => Method::Yz,
        }
    }
}

#[derive(Debug, Args)]
pub struct KrigeArgs {
    /// Sample CSV with header `s,x`
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar JSON written by `estimate`
    #[arg(long, conflicts_with_all = ["model", "sigma2", "range", "nu"])]
    pub estimate: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV of targets with header `s`
    #[arg(long, conflicts_with = "n_pred")]
    pub targets: Option<PathBuf>,
    /// Number of equally spaced interior targets
    #[arg(long)]
    pub n_pred: Option<usize>,
    /// Window length (default ceil of the largest location)
    #[arg(long)]
    pub domain_length: Option<f64>,
    #[arg(long, default_value = "predictions.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Override the replicate count of the configuration
    #[arg(long)]
    pub replicates: Option<usize>,
}

/// Record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
}

/// Sidecar of `estimate`; enough to rebuild the estimate from the sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateSidecar {
    pub method: Method,
    pub n_obs: usize,
    pub domain_length: f64,
    pub omega_c: f64,
    pub k_max: Option<usize>,
    pub lambda: f64,
    pub gcv_score: Option<f64>,
    pub lag_classes: usize,
    pub nonzero_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yz: Option<YzSidecar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YzSidecar {
    pub alpha0_hat: f64,
    pub gamma_hat: f64,
    pub tail_scale: f64,
    pub tail_clamped: bool,
    pub alpha_clamped: bool,
    pub decay: DecayEstimate,
    pub variogram: VariogramTriples,
}

/// Keys of a shared configuration file read by `simulate`.
#[derive(Debug, Default, Serialize, Deserialize)]
struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<CovarianceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) => 2,
        Error::Data(_) | Error::Domain(_) | Error::Io { .. } => 3,
        Error::Estimation(_) | Error::Numerical(_) => 4,
    }
}

fn error_record(kind: &str, message: &str, code: i32) -> String {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    serde_json::json!({ "error": kind, "message": one_line, "exit_code": code }).to_string()
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::parameter(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::parameter(format!("{THREADS_ENV} must be positive")));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_record("usage", &e.to_string(), 2));
            return 2;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", error_record(e.kind(), &e.to_string(), code));
            code
        }
    }
}

/// Loads `--config`: TOML, or the `config` member of a JSON manifest.
fn load_config(path: Option<&Path>) -> Result<Option<toml::Table>> {
    let Some(path) = path else { return Ok(None) };
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value = io::read_json(path)?;
        let cfg = manifest
            .get("config")
            .cloned()
            .ok_or_else(|| Error::parameter(format!("{}: manifest has no 'config'", path.display())))?;
        let table = serde_json::from_value::<toml::Table>(cfg)
            .map_err(|e| Error::parameter(format!("{}: {e}", path.display())))?;
        return Ok(Some(table));
    }
    io::read_toml_table(path).map(Some)
}

fn config_as<T: serde::de::DeserializeOwned>(table: &toml::Table) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e| Error::parameter(format!("configuration: {e}")))
}

/// Picks the estimator keys out of a shared configuration table.
fn estimator_settings(table: Option<&toml::Table>) -> Result<EstimatorSettings> {
    let Some(t) = table else { return Ok(EstimatorSettings::default()) };
    let keys = ["omega_c", "lambda_grid", "h_max", "k_max"];
    let sub: toml::Table = t
        .iter()
        .filter(|(k, _)| keys.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    config_as(&sub)
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &Path) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.display().to_string());
        p
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    configure_threads()?;
    let started = now_unix();
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::Io {
        path: cli.out_dir.display().to_string(),
        source: e,
    })?;
    let table = load_config(cli.config.as_deref())?;
    let mut out = Outputs {
        dir: &cli.out_dir,
        written: Vec::new(),
    };
    let (name, config, seeds) = match &cli.command {
        Command::Simulate(a) => run_simulate(a, cli.seed, table.as_ref(), &mut out)?,
        Command::Estimate(a) => run_estimate(a, table.as_ref(), &mut out)?,
        Command::Krige(a) => run_krige(a, table.as_ref(), &mut out)?,
        Command::Benchmark(a) => run_benchmark(a, cli.seed, table.as_ref(), &mut out)?,
    };
    let manifest_path = cli.out_dir.join(format!("{name}.manifest.json"));
    let manifest = RunManifest {
        command: name.to_string(),
        argv,
        config,
        seeds,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        outputs: out.written,
    };
    io::write_json(&manifest_path, &manifest)
}

type RunInfo = (&'static str, serde_json::Value, Vec<u64>);

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn run_simulate(a: &SimulateArgs, seed: Option<u64>, table: Option<&toml::Table>, out: &mut Outputs) -> Result<RunInfo> {
    let cfg: SimulateConfig = match table {
        Some(t) => {
            let keys = ["model", "n", "domain_length", "seed"];
            let sub: toml::Table = t
                .iter()
                .filter(|(k, _)| keys.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            config_as(&sub)?
        }
        None => SimulateConfig::default(),
    };
    let model = if a.model.given() || cfg.model.is_none() {
        a.model.resolve(cfg.model)?
    } else {
        cfg.model.expect("checked above")
    };
    let n = a
        .n
        .or(cfg.n)
        .ok_or_else(|| Error::parameter("simulate needs --n or 'n' in the configuration"))?;
    let length = a.domain_length.or(cfg.domain_length).unwrap_or(n as f64);
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let sample = simulate_sample(&model, n, length, seed)?;
    let path = out.path(&a.output);
    io::write_sample_csv(&path, &sample)?;
    log::info!("simulated {n} observations of {:?} on [0, {length}]", model.kind);
    let resolved = SimulateConfig {
        model: Some(model),
        n: Some(n),
        domain_length: Some(length),
        seed: Some(seed),
    };
    Ok(("simulate", to_json(&resolved), vec![seed]))
}

fn frequency_grid(max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::parameter("--grid-points must be at least 2"));
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::parameter(format!("--grid-max must be positive, got {max}")));
    }
    Ok((0..points).map(|i| max * i as f64 / (points - 1) as f64).collect())
}

#[derive(Serialize)]
struct SpectrumRow {
    omega: f64,
    f: f64,
}

fn run_estimate(a: &EstimateArgs, table: Option<&toml::Table>, out: &mut Outputs) -> Result<RunInfo> {
    let sample = io::read_sample_csv(&a.input, a.domain_length)?;
    let mut settings = estimator_settings(table)?;
    if let Some(c) = a.omega_c {
        settings.omega_c = c;
    }
    if let Some(l) = a.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::parameter(format!("--lambda must be positive, got {l}")));
        }
        settings.lambda_grid = Some(vec![l]);
    }
    if a.h_max.is_some() {
        settings.h_max = a.h_max;
    }
    if a.k_max.is_some() {
        settings.k_max = a.k_max;
    }
    let method: Method = a.method.into();
    let stem = match method {
        Method::Yz => "estimate_yz",
        _ => "estimate_hhc",
    };
    let csv_name = a.output.clone().unwrap_or_else(|| PathBuf::from(format!("{stem}.csv")));
    let csv_path = out.path(&csv_name);
    let sidecar_path = out.path(&csv_name.with_extension("json"));

    let (hhc, yz) = match method {
        Method::Hhc => (fit_hhc(&sample, &settings)?, None),
        _ => {
            let y = fit_yz(&sample, &settings)?;
            (y.hhc.clone(), Some(y))
        }
    };
    let sums = hhc.spline.lag_sums();
    log::info!(
        "K = {} lag classes, {} nonzero; λ = {}; ω_c = {}",
        sums.max_lag(),
        sums.nonzero_classes(),
        hhc.spline.lambda(),
        hhc.spline.omega_c()
    );
    let omega_c = hhc.spline.omega_c();
    let grid_max = a.grid_max.unwrap_or(match method {
        Method::Yz => 2.0 * omega_c,
        _ => omega_c,
    });
    let grid = frequency_grid(grid_max, a.grid_points)?;
    let rows: Vec<SpectrumRow> = match &yz {
        Some(y) => grid
            .iter()
            .map(|&w| SpectrumRow {
                omega: w,
                f: y.estimate.eval_yz_positive(w),
            })
            .collect(),
        None => grid
            .iter()
            .map(|&w| SpectrumRow {
                omega: w,
                f: hhc.spline.eval_f_delta(w),
            })
            .collect(),
    };
    io::write_csv(&csv_path, rows)?;

    let yz_side = yz.as_ref().map(|y| {
        let d = *y.estimate.decay();
        YzSidecar {
            alpha0_hat: d.alpha0_hat,
            gamma_hat: d.gamma_hat,
            tail_scale: y.estimate.tail_scale(),
            tail_clamped: y.estimate.tail_clamped(),
            alpha_clamped: d.clamped,
            decay: d,
            variogram: y.variogram.clone(),
        }
    });
    if let (Some(path), Some(y)) = (&a.variogram_output, &yz) {
        let p = out.path(path);
        io::write_csv(&p, y.variogram.iter())?;
    }
    let sidecar = EstimateSidecar {
        method,
        n_obs: sample.len(),
        domain_length: sample.domain_length(),
        omega_c,
        k_max: settings.k_max,
        lambda: hhc.spline.lambda(),
        gcv_score: hhc.gcv.score,
        lag_classes: sums.max_lag(),
        nonzero_classes: sums.nonzero_classes(),
        yz: yz_side,
    };
    io::write_json(&sidecar_path, &sidecar)?;
    let mut cfg = to_json(&settings);
    if let serde_json::Value::Object(m) = &mut cfg {
        m.insert("domain_length".into(), to_json(&sample.domain_length()));
    }
    Ok(("estimate", cfg, Vec::new()))
}

/// Rebuilds the spline from the sample and the sidecar's settings.
fn rebuild_spline(sample: &SampleSet, side: &EstimateSidecar) -> Result<SplineSpectral> {
    if sample.len() != side.n_obs {
        return Err(Error::data(format!(
            "sidecar was fitted to {} observations, sample has {}",
            side.n_obs,
            sample.len()
        )));
    }
    let grid = GridSpec::new(side.omega_c, side.domain_length)?;
    let sums = accumulate_lag_sums(sample, &grid, side.k_max);
    SplineSpectral::new(sums, side.omega_c, side.lambda)
}

#[derive(Serialize)]
struct PredictionRow {
    s: f64,
    prediction: f64,
    variance: f64,
}

fn run_krige(a: &KrigeArgs, _table: Option<&toml::Table>, out: &mut Outputs) -> Result<RunInfo> {
    let sidecar: Option<EstimateSidecar> = a.estimate.as_deref().map(io::read_json).transpose()?;
    let length = a.domain_length.or(sidecar.as_ref().map(|s| s.domain_length));
    let sample = io::read_sample_csv(&a.input, length)?;
    let targets = match (&a.targets, a.n_pred) {
        (Some(p), _) => io::read_targets_csv(p)?,
        (None, n) => prediction_targets(sample.domain_length(), n.unwrap_or(100))?,
    };
    let predict = |cov: &dyn Fn(f64) -> f64, name: &str| -> Result<Vec<PredictionRow>> {
        let k = SimpleKriging::fit(&sample, cov, name)?;
        if k.jitter_level() > 0.0 {
            log::warn!("{name} covariance needed diagonal jitter {:e}·C(0)", k.jitter_level());
        }
        let rows: Vec<PredictionRow> = targets
            .iter()
            .map(|&t| PredictionRow {
                s: t,
                prediction: k.predict(t, cov),
                variance: k.variance(t, cov),
            })
            .collect();
        if rows.iter().any(|r| !r.prediction.is_finite()) {
            return Err(Error::numerical(format!("{name} kriging produced non-finite predictions")));
        }
        Ok(rows)
    };
    let (rows, cfg) = match &sidecar {
        Some(side) => {
            let spline = rebuild_spline(&sample, side)?;
            let rows = match (&side.method, &side.yz) {
                (Method::Hhc, _) => predict(&|h| spline.hhc_covariance(h), "HHC")?,
                (Method::Yz, Some(y)) => {
                    let est = assemble(spline, y.decay)?;
                    let reach = sample.domain_length() + 1.0;
                    let fast = YzCovariance::new(&est, reach)?;
                    let steps = (sample.domain_length() / KRIGING_TABLE_STEP).ceil() as usize + 4;
                    let values = fast.eval_grid(KRIGING_TABLE_STEP, steps)?;
                    let exact = |h: f64| fast.eval(h).unwrap_or(f64::NAN);
                    let table = CovarianceTable::new(KRIGING_TABLE_STEP, values, KRIGING_EXACT_BELOW, &exact)?;
                    predict(&|h| table.eval(h), "YZ")?
                }
                _ => return Err(Error::data("sidecar lacks the fields of its method")),
            };
            (rows, to_json(side))
        }
        None => {
            let model = a.model.resolve(None)?;
            (predict(&|h| model.covariance(h), "model")?, to_json(&model))
        }
    };
    let path = out.path(&a.output);
    io::write_csv(&path, rows)?;
    Ok(("krige", cfg, Vec::new()))
}

#[derive(Serialize)]
struct IpeOut<'a> {
    replicate: usize,
    method: &'a str,
    target: f64,
    ipe: f64,
}

fn run_benchmark(a: &BenchmarkArgs, seed: Option<u64>, table: Option<&toml::Table>, out: &mut Outputs) -> Result<RunInfo> {
    let table = table.ok_or_else(|| Error::parameter("benchmark needs --config"))?;
    let mut config: ExperimentConfig = config_as(table)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    config.validate()?;
    let result = run_experiment(&config)?;
    for s in &result.summary {
        log::info!(
            "{}: ISE(f) {} ISE(C) {} mIPE {} ({} ok, {} failed)",
            s.method.name(),
            s.ise_f,
            s.ise_c,
            s.mipe,
            s.succeeded,
            s.failed
        );
    }
    io::write_csv(&out.path(Path::new("summary.csv")), &result.summary)?;
    io::write_csv(&out.path(Path::new("details.csv")), &result.details)?;
    io::write_csv(
        &out.path(Path::new("ipe.csv")),
        result.ipe.iter().map(|r| IpeOut {
            replicate: r.replicate,
            method: r.method.name(),
            target: r.target,
            ipe: r.ipe,
        }),
    )?;
    if !result.curves.is_empty() {
        io::write_csv(&out.path(Path::new("curves.csv")), &result.curves)?;
    }
    let seeds = (0..config.replicates as u64).map(|j| config.seed.wrapping_add(j)).collect();
    Ok(("benchmark", to_json(&config), seeds))
}
