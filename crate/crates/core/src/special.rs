//! Special functions: modified Bessel function of the second kind, and the
//! Riemann and Hurwitz zeta functions on the real axis `s > 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[cfg(test)]
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 10_000;

/// Taylor coefficients of `1 / Γ(1 + z)` about `z = 0`.
const RECIP_GAMMA_1P: [f64; 23] = [
    1.0,
    0.577_215_664_901_532_860_61,
    -0.655_878_071_520_253_881_08,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_748,
    -0.009_621_971_527_876_973_562_1,
    0.007_218_943_246_663_099_542_4,
    -0.001_165_167_591_859_065_112_1,
    -0.000_215_241_674_114_950_972_82,
    0.000_128_050_282_388_116_186_15,
    -0.000_020_134_854_780_788_238_656,
    -1.250_493_482_142_670_657_3e-6,
    1.133_027_231_981_695_882_4e-6,
    -2.056_338_416_977_607_103_5e-7,
    6.116_095_104_481_415_817_9e-9,
    5.002_007_644_469_222_930_1e-9,
    -1.181_274_570_487_020_144_6e-9,
    1.043_426_711_691_100_510_5e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708_2e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783_2e-14,
];

/// Modified Bessel function of the second kind `K_ν(x)` for real order and
/// `x > 0`. Returns `+∞` at `x = 0` and NaN for negative `x`.
///
/// Half-integer orders use the exact elementary closed form. Other orders
/// use Temme's series for `x ≤ 2` and Steed's continued fraction above,
/// followed by forward recurrence in the order; relative accuracy is
/// around 1e-14 over `ν ∈ [0, 10]`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if x.is_nan() || x < 0.0 || nu.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    let nu = nu.abs();
    if let Some(m) = half_integer_index(nu) {
        return bessel_k_half_integer(m, x);
    }

    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let (mut k_prev, mut k_cur) = if x <= 2.0 {
        temme_series(mu, x)
    } else {
        steed_cf2(mu, x)
    };
    // forward recurrence K_{μ+j+1} = K_{μ+j-1} + 2(μ+j)/x K_{μ+j}
    for j in 1..=(n as usize) {
        let order = mu + j as f64;
        let next = k_prev + 2.0 * order / x * k_cur;
        k_prev = k_cur;
        k_cur = next;
    }
    k_prev
}

/// Returns `m` when `nu == m + 1/2` exactly.
fn half_integer_index(nu: f64) -> Option<usize> {
    let twice = 2.0 * nu;
    if twice.fract() == 0.0 && twice < 1e6 && (twice as u64) % 2 == 1 {
        Some((twice as u64 / 2) as usize)
    } else {
        None
    }
}

fn bessel_k_half_integer(m: usize, x: f64) -> f64 {
    let k_half = (PI / (2.0 * x)).sqrt() * (-x).exp();
    if m == 0 {
        return k_half;
    }
    let mut k_prev = k_half;
    let mut k_cur = k_half * (1.0 + 1.0 / x);
    for j in 1..m {
        let order = j as f64 + 0.5;
        let next = k_prev + 2.0 * order / x * k_cur;
        k_prev = k_cur;
        k_cur = next;
    }
    k_cur
}

/// `(Γ₁(μ), Γ₂(μ))` of Temme's method for `|μ| ≤ 1/2`, from the Taylor
/// series of `1/Γ(1+z)` so no cancellation occurs near `μ = 0`.
fn temme_gammas(mu: f64) -> (f64, f64) {
    // 1/Γ(1-μ) - 1/Γ(1+μ) = -2 Σ_{odd m} b_m μ^m ; sum = 2 Σ_{even m} b_m μ^m
    let mu2 = mu * mu;
    let mut odd = 0.0;
    let mut even = 0.0;
    let mut p = 1.0;
    for pair in RECIP_GAMMA_1P.chunks(2) {
        even += pair[0] * p;
        if pair.len() > 1 {
            odd += pair[1] * p;
        }
        p *= mu2;
    }
    (-odd, even)
}

/// Temme's series for `K_μ(x)` and `K_{μ+1}(x)`, `|μ| ≤ 1/2`, `0 < x ≤ 2`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let (gam1, gam2) = temme_gammas(mu);
    let recip_gamma_plus = gam2 - mu * gam1; // 1/Γ(1+μ)
    let recip_gamma_minus = gam2 + mu * gam1; // 1/Γ(1-μ)

    let half_x = 0.5 * x;
    let ln_half = half_x.ln();
    let pimu = PI * mu;
    let fact = if pimu.abs() < f64::EPSILON {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -ln_half;
    let sigma = mu * d;
    let fact2 = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let mut ff = fact * (gam1 * sigma.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ex = sigma.exp(); // (x/2)^{-μ}
    let mut p = 0.5 * ex / recip_gamma_plus;
    let mut q = 0.5 / (ex * recip_gamma_minus);
    let mut c = 1.0;
    let d2 = half_x * half_x;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Steed's continued fraction (CF2) for `K_μ(x)` and `K_{μ+1}(x)`, `x > 2`.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - a1 * h) / x;
    (k_mu, k_mu1)
}

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

const BERNOULLI_2K: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` for `s > 1`, `a > 0`, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!(
            "hurwitz zeta requires s > 1, got {s}"
        )));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "hurwitz zeta requires a > 0, got {a}"
        )));
    }
    const N: usize = 12;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (k as f64 + a).powf(-s);
    }
    let w = N as f64 + a;
    let w_pow = w.powf(-s);
    sum += w * w_pow / (s - 1.0) + 0.5 * w_pow;

    // Σ_j B_{2j}/(2j)! s(s+1)...(s+2j-2) w^{-s-2j+1}
    let mut rising = s; // s(s+1)...(s+2j-2)
    let mut factorial = 2.0; // (2j)!
    let mut w_term = w_pow / w; // w^{-s-2j+1}
    let inv_w2 = 1.0 / (w * w);
    for (j, &b2j) in BERNOULLI_2K.iter().enumerate() {
        let term = b2j / factorial * rising * w_term;
        sum += term;
        if term.abs() <= sum.abs() * f64::EPSILON * 0.5 {
            break;
        }
        let jj = (j + 1) as f64;
        rising *= (s + 2.0 * jj - 1.0) * (s + 2.0 * jj);
        factorial *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
        w_term *= inv_w2;
    }
    Ok(sum)
}

/// Riemann zeta `ζ(s)` for `s > 1`.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    hurwitz_zeta(s, 1.0)
}

/// `Γ₁(0) = -γ`; exposed for tests of the Temme coefficients.
#[cfg(test)]
fn temme_gamma1_at_zero() -> f64 {
    temme_gammas(0.0).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt`, trapezoid on a long range.
    fn bessel_k_integral(nu: f64, x: f64) -> f64 {
        let h = 1e-3_f64;
        let mut sum = 0.5 * (-x).exp();
        for i in 1.. {
            let t = h * i as f64;
            let v = (-x * t.cosh()).exp() * (nu * t).cosh();
            sum += v;
            if v < 1e-300 || t > 50.0 {
                break;
            }
        }
        sum * h
    }

    #[test]
    fn half_integer_orders_match_elementary_forms() {
        for &x in &[0.01, 0.5, 1.0, 3.0, 20.0] {
            let k12 = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert_relative_eq!(bessel_k(0.5, x), k12, max_relative = 1e-15);
            assert_relative_eq!(bessel_k(1.5, x), k12 * (1.0 + 1.0 / x), max_relative = 1e-14);
            let k52 = k12 * (1.0 + 3.0 / x + 3.0 / (x * x));
            assert_relative_eq!(bessel_k(2.5, x), k52, max_relative = 1e-14);
        }
    }

    #[test]
    fn general_order_matches_integral_representation() {
        for &nu in &[0.0, 0.1, 0.3, 0.49, 0.51, 1.0, 1.3, 2.7, 4.9] {
            for &x in &[0.05, 0.7, 1.9, 2.1, 5.0, 15.0] {
                let want = bessel_k_integral(nu, x);
                let got = bessel_k(nu, x);
                assert_relative_eq!(got, want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn general_order_is_continuous_towards_half_integers() {
        for &x in &[0.3, 1.0, 2.5, 8.0] {
            let exact = bessel_k(0.5, x);
            assert_relative_eq!(bessel_k(0.5 + 1e-9, x), exact, max_relative = 1e-8);
            assert_relative_eq!(bessel_k(0.5 - 1e-9, x), exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn known_integer_order_values() {
        // K_0(1), K_1(1), K_0(2.5)
        assert_relative_eq!(bessel_k(0.0, 1.0), 0.421_024_438_240_708_3, max_relative = 1e-13);
        assert_relative_eq!(bessel_k(1.0, 1.0), 0.601_907_230_197_234_6, max_relative = 1e-13);
        assert_relative_eq!(bessel_k(0.0, 2.5), 0.062_347_553_200_366_3, max_relative = 1e-12);
    }

    #[test]
    fn bessel_k_edge_inputs() {
        assert!(bessel_k(1.0, 0.0).is_infinite());
        assert!(bessel_k(1.0, -1.0).is_nan());
        assert_eq!(bessel_k(-1.3, 2.0), bessel_k(1.3, 2.0));
    }

    #[test]
    fn temme_gamma_coefficients() {
        assert_relative_eq!(temme_gamma1_at_zero(), -EULER_GAMMA, max_relative = 1e-15);
        // Γ₂(μ) = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2
        let mu: f64 = 0.37;
        let g = statrs::function::gamma::gamma;
        let (g1, g2) = temme_gammas(mu);
        assert_relative_eq!(g2, 0.5 * (1.0 / g(1.0 - mu) + 1.0 / g(1.0 + mu)), max_relative = 1e-14);
        assert_relative_eq!(
            g1,
            (1.0 / g(1.0 - mu) - 1.0 / g(1.0 + mu)) / (2.0 * mu),
            max_relative = 1e-12
        );
    }

    #[test]
    fn riemann_zeta_closed_forms() {
        assert_relative_eq!(riemann_zeta(2.0).unwrap(), PI * PI / 6.0, max_relative = 1e-15);
        assert_relative_eq!(riemann_zeta(4.0).unwrap(), PI.powi(4) / 90.0, max_relative = 1e-15);
        assert_relative_eq!(riemann_zeta(60.0).unwrap(), 1.0, max_relative = 1e-15);
        // ζ(s) ≈ 1/(s-1) + γ near the pole
        let s = 1.0 + 1e-6;
        assert_relative_eq!(riemann_zeta(s).unwrap(), 1e6 + EULER_GAMMA, max_relative = 1e-9);
    }

    #[test]
    fn hurwitz_zeta_half_shift() {
        // ζ(s, 1/2) = (2^s - 1) ζ(s)
        for &s in &[1.2, 2.0, 3.5] {
            let lhs = hurwitz_zeta(s, 0.5).unwrap();
            let rhs = (2f64.powf(s) - 1.0) * riemann_zeta(s).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
        }
    }

    #[test]
    fn hurwitz_zeta_rejects_bad_arguments() {
        assert!(hurwitz_zeta(1.0, 1.0).is_err());
        assert!(hurwitz_zeta(2.0, 0.0).is_err());
        assert!(hurwitz_zeta(f64::NAN, 1.0).is_err());
    }
}
