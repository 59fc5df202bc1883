//! Numerical integration: adaptive Gauss–Kronrod, fixed Gauss–Legendre and
//! composite Simpson rules, Wynn's epsilon acceleration, and the
//! semi-infinite oscillatory integral `∫_a^∞ ω^{-γ} cos(ωh) dω`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_056_625_450,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights for the odd-indexed Kronrod nodes
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// One 21-point Gauss–Kronrod application on `[a, b]`; returns the Kronrod
/// estimate and `|K21 - G10|` as the error estimate.
pub fn gauss_kronrod_21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-10,
            max_segments: 4000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance {
            abs,
            rel: 0.0,
            ..Tolerance::default()
        }
    }
}

/// Globally adaptive Gauss–Kronrod integration over the finite `[a, b]`,
/// bisecting the segment with the largest error estimate until the total
/// error meets `max(abs, rel·|value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Quadrature> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::parameter(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = gauss_kronrod_21(&mut f, a, b);
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_error = error;

    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_error <= target {
            break;
        }
        if heap.len() >= tol.max_segments {
            return Err(Error::numerical(format!(
                "adaptive quadrature on [{a}, {b}] did not converge: estimate {total:e}, \
                 error {total_error:e} > target {target:e} after {evaluations} evaluations"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // segment cannot be split further in floating point
            heap.push(worst);
            return Err(Error::numerical(format!(
                "adaptive quadrature on [{a}, {b}] reached floating-point resolution: \
                 estimate {total:e}, error {total_error:e}"
            )));
        }
        let (lv, le) = gauss_kronrod_21(&mut f, worst.a, mid);
        let (rv, re) = gauss_kronrod_21(&mut f, mid, worst.b);
        evaluations += 42;
        total += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
    }
    // re-sum to shed accumulated update rounding
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let abs_error: f64 = heap.iter().map(|s| s.error).sum();
    Ok(Quadrature {
        value,
        abs_error,
        evaluations,
    })
}

/// Composite Simpson rule with `panels` subintervals (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(2).next_multiple_of(2);
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let x = a + h * i as f64;
        sum += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    sum * h / 3.0
}

/// Simpson weights for `panels` subintervals on `[a, b]`; pairs with the
/// abscissae `a + i (b - a) / panels`.
pub fn simpson_weights(a: f64, b: f64, panels: usize) -> Vec<f64> {
    let panels = panels.max(2).next_multiple_of(2);
    let h = (b - a) / panels as f64;
    (0..=panels)
        .map(|i| {
            let c = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        loop {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums. Returns
/// the accelerated limit and the change between the last two estimates.
pub fn wynn_epsilon(partial_sums: &[f64]) -> (f64, f64) {
    let n = partial_sums.len();
    if n < 3 {
        let last = partial_sums.last().copied().unwrap_or(0.0);
        let prev = if n == 2 { partial_sums[0] } else { last };
        return (last, (last - prev).abs());
    }
    // columns of the epsilon table; `prev` is column j-1, `cur` column j
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial_sums.to_vec();
    let mut best = *partial_sums.last().unwrap();
    let mut best_prev = partial_sums[n - 2];
    let mut col = 0;
    while cur.len() >= 2 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for k in 0..cur.len() - 1 {
            let diff = cur[k + 1] - cur[k];
            if diff == 0.0 {
                // sequence has already converged at this entry
                return (cur[k + 1], 0.0);
            }
            next.push(prev[k + 1] + 1.0 / diff);
        }
        col += 1;
        prev = cur;
        cur = next;
        if col % 2 == 0 && !cur.is_empty() {
            let estimate = *cur.last().unwrap();
            if !estimate.is_finite() {
                break;
            }
            best_prev = if cur.len() >= 2 { cur[cur.len() - 2] } else { best };
            best = estimate;
        }
    }
    (best, (best - best_prev).abs())
}

/// `∫_a^∞ ω^{-γ} cos(ωh) dω` for `a > 0`, `h ≥ 0`.
///
/// At `h = 0` the closed form `a^{1-γ}/(γ-1)` is returned (requires `γ > 1`).
/// Otherwise one integration by parts gives
/// `-a^{-γ} sin(ah)/h + (γ/h) ∫_a^∞ ω^{-γ-1} sin(ωh) dω`; the remaining
/// integral is summed over half-period panels between the zeros of
/// `sin(ωh)` and the alternating partial sums are accelerated with Wynn's
/// epsilon algorithm.
pub fn cosine_power_tail(a: f64, gamma: f64, h: f64, abs_tol: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::parameter(format!("tail start must be positive, got {a}")));
    }
    let h = h.abs();
    if h == 0.0 {
        if !(gamma > 1.0) {
            return Err(Error::Domain(format!(
                "tail integral at h = 0 needs decay > 1, got {gamma}"
            )));
        }
        return Ok(a.powf(1.0 - gamma) / (gamma - 1.0));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "tail integral needs positive decay, got {gamma}"
        )));
    }
    let boundary = -a.powf(-gamma) * (a * h).sin() / h;
    let inner_tol = abs_tol * h / gamma;
    let integrand = |w: f64| w.powf(-gamma - 1.0) * (w * h).sin();

    let half_period = PI / h;
    let first_zero = ((a / half_period).floor() + 1.0) * half_period;

    // first segment [a, first_zero]; split geometrically when long
    let mut head = 0.0;
    let mut lo = a;
    while lo < first_zero {
        let hi = (2.0 * lo).min(first_zero);
        head += integrate(integrand, lo, hi, Tolerance::absolute(inner_tol * 0.1))?.value;
        lo = hi;
    }

    let mut sums = vec![head];
    let mut last_estimate = f64::NAN;
    let mut stable = 0;
    let max_panels = 400;
    for m in 0..max_panels {
        let z0 = first_zero + m as f64 * half_period;
        let z1 = z0 + half_period;
        let (panel, _) = gauss_kronrod_21(&mut { integrand }, z0, z1);
        let next = sums.last().unwrap() + panel;
        sums.push(next);
        if panel.abs() < inner_tol * 1e-3 {
            return Ok(boundary + gamma / h * next);
        }
        if sums.len() >= 4 {
            // the table over a short recent window keeps roundoff in check
            let window = &sums[sums.len().saturating_sub(24)..];
            let (estimate, change) = wynn_epsilon(window);
            if (estimate - last_estimate).abs() <= inner_tol && change <= 10.0 * inner_tol {
                stable += 1;
                if stable >= 2 {
                    return Ok(boundary + gamma / h * estimate);
                }
            } else {
                stable = 0;
            }
            last_estimate = estimate;
        }
    }
    Err(Error::numerical(format!(
        "oscillatory tail integral did not converge (a = {a}, decay = {gamma}, h = {h}) \
         after {max_panels} half-period panels; last estimate {last_estimate:e}"
    )))
}
