//! Scalar distribution functions: normal CDF/quantile, Gaussian density
//! derivatives, regularized incomplete gamma and its inverse, and the
//! Poisson / binomial tail helpers used by the Gaussian reference theory.

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, Phi(x).
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function, 1 - Phi(x), accurate in the far tail.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, |relative error| < 1e-15).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("normal_quantile requires p in (0,1)"));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(q * num / den);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Probabilists' Hermite polynomial He_m(x), m <= 6.
pub fn hermite(m: usize, x: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => x,
        2 => x * x - 1.0,
        3 => x * (x * x - 3.0),
        4 => x * x * (x * x - 6.0) + 3.0,
        5 => x * (x * x * (x * x - 10.0) + 15.0),
        6 => x * x * (x * x * (x * x - 15.0) + 45.0) - 15.0,
        _ => {
            // recurrence He_{m+1} = x He_m - m He_{m-1}
            let (mut a, mut b) = (hermite(5, x), hermite(6, x));
            for j in 6..m {
                let c = x * b - j as f64 * a;
                a = b;
                b = c;
            }
            b
        }
    }
}

/// m-th derivative of the N(0, sigma^2) density at t:
/// phi_sigma^(m)(t) = (-1)^m He_m(t/sigma) phi(t/sigma) / sigma^(m+1).
pub fn normal_pdf_deriv(m: usize, t: f64, sigma: f64) -> f64 {
    let x = t / sigma;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * hermite(m, x) * normal_pdf(x) / sigma.powi(m as i32 + 1)
}

/// log Gamma(x) for x > 0.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// log of the binomial coefficient C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial coefficient C(n, k) as f64, exact for moderate arguments and
/// computed by the falling-product form so that C(n, k) = 0 when n < k.
pub fn choose_f(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Exact binomial coefficient in u128; the multiplicative recurrence keeps
/// every intermediate integral. Panics on overflow (n beyond ~120).
pub fn choose_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

const GAMMA_MAX_ITER: usize = 400;

/// Regularized lower incomplete gamma function P(a, x).
///
/// Series expansion for x < a + 1, Lentz continued fraction otherwise.
pub fn reg_gamma_lower(a: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || x < 0.0 {
        return Err(Error::Domain("reg_gamma_lower requires a > 0, x >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // P(a,x) = prefactor * sum_{m>=0} x^m / (a (a+1) ... (a+m))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        Ok((log_prefactor.exp() * sum).clamp(0.0, 1.0))
    } else {
        // Q(a,x) via Lentz's continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        let q = log_prefactor.exp() * h;
        Ok((1.0 - q).clamp(0.0, 1.0))
    }
}

/// Density of Gamma(theta, scale 1).
pub fn gamma_pdf(theta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((theta - 1.0) * x.ln() - x - ln_gamma(theta)).exp()
}

/// Quantile of Gamma(shape theta, unit scale): the x with P(theta, x) = p.
///
/// Bracketing plus Newton on the regularized incomplete gamma; the returned
/// x satisfies |P(theta, x) - p| < 1e-12 (well inside the 1e-10 contract).
pub fn gamma_quantile(p: f64, theta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("gamma_quantile requires p in (0,1)"));
    }
    if theta <= 0.0 {
        return Err(Error::Domain("gamma_quantile requires theta > 0"));
    }
    // Wilson-Hilferty starting point, clamped into the bracket.
    let z = normal_quantile(p)?;
    let wh = {
        let c = 1.0 - 1.0 / (9.0 * theta) + z / (3.0 * theta.sqrt());
        theta * c * c * c
    };
    let mut lo = 0.0_f64;
    let mut hi = if wh.is_finite() && wh > 0.0 { 2.0 * wh } else { theta + 1.0 };
    for _ in 0..200 {
        if reg_gamma_lower(theta, hi)? >= p {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut x = if wh > lo && wh < hi { wh } else { 0.5 * (lo + hi) };
    for _ in 0..100 {
        let f = reg_gamma_lower(theta, x)? - p;
        if f.abs() < 1e-13 {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dens = gamma_pdf(theta, x);
        let step = if dens > 0.0 { f / dens } else { f64::NAN };
        let candidate = x - step;
        x = if candidate.is_finite() && candidate > lo && candidate < hi {
            candidate
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Poisson CDF: P(Poisson(lambda) <= j).
pub fn poisson_cdf(j: i64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::Domain("poisson_cdf requires lambda >= 0"));
    }
    if j < 0 {
        return Ok(0.0);
    }
    let mut term = (-lambda).exp();
    let mut sum = term;
    for m in 1..=j {
        term *= lambda / m as f64;
        sum += term;
    }
    Ok(sum.min(1.0))
}

/// Binomial CDF: P(Binomial(n, p) <= j), summed in log space.
pub fn binomial_cdf(j: i64, n: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain("binomial_cdf requires p in [0,1]"));
    }
    if j < 0 {
        return Ok(0.0);
    }
    if j as u64 >= n {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut sum = 0.0;
    for m in 0..=j as u64 {
        sum += (ln_choose(n, m) + m as f64 * lp + (n - m) as f64 * lq).exp();
    }
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_quantile_roundtrip() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6] {
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-12 * p.max(1e-3), "p = {p}");
        }
        // tail-safe round trips: cdf for the left tail, sf for the right
        // (1 - p is not representable to full precision near p = 1)
        for &x in &[-8.0, -3.0, -1.0, 0.0] {
            assert!((normal_quantile(normal_cdf(x)).unwrap() - x).abs() < 1e-9, "x = {x}");
        }
        for &x in &[0.5, 2.0, 6.0, 8.0] {
            assert!((normal_quantile(normal_sf(x)).unwrap() + x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn normal_tail_values() {
        // classical table value
        assert!((normal_sf(1.6449) - 0.05).abs() < 1e-4);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pdf_derivatives_match_finite_differences() {
        let h = 1e-5;
        for m in 1..=4usize {
            for &t in &[-1.3, 0.2, 1.7, 3.1] {
                for &s in &[0.7, 1.0, 1.9] {
                    let fd = (normal_pdf_deriv(m - 1, t + h, s) - normal_pdf_deriv(m - 1, t - h, s))
                        / (2.0 * h);
                    let an = normal_pdf_deriv(m, t, s);
                    assert!(
                        (fd - an).abs() < 1e-6 * an.abs().max(1.0),
                        "m={m} t={t} s={s}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn incomplete_gamma_known_values() {
        // P(1, x) = 1 - exp(-x)
        for &x in &[0.1, 1.0, 3.5] {
            assert!((reg_gamma_lower(1.0, x).unwrap() - (1.0 - (-x).exp())).abs() < 1e-14);
        }
        // P(1/2, x) = erf(sqrt(x))
        for &x in &[0.2, 1.0, 2.7] {
            assert!((reg_gamma_lower(0.5, x).unwrap() - libm::erf(x.sqrt())).abs() < 1e-13);
        }
    }

    #[test]
    fn gamma_quantile_exponential_closed_form() {
        // theta = 1: F^{-1}(p) = -ln(1-p)
        let v = gamma_quantile(1.0 - (-1.0f64).exp(), 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = gamma_quantile(0.5, 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn gamma_quantile_half_shape_vs_quadrature() {
        // Independent oracle: integrate the Gamma(1/2) density with the
        // substitution t = u^2 (removes the endpoint singularity), Simpson rule.
        let v = gamma_quantile(0.5, 0.5).unwrap();
        let integrand = |u: f64| 2.0 * (-u * u).exp() / ln_gamma(0.5).exp();
        let m = 20_000;
        let b = v.sqrt();
        let h = b / m as f64;
        let mut s = integrand(0.0) + integrand(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(i as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - 0.5).abs() < 1e-8, "quadrature gave {integral}");
    }

    #[test]
    fn gamma_quantile_monotone_and_consistent() {
        for &theta in &[0.5, 1.0, 2.3, 7.0] {
            let mut prev = 0.0;
            for i in 1..40 {
                let p = i as f64 / 40.0;
                let x = gamma_quantile(p, theta).unwrap();
                assert!(x > prev);
                prev = x;
                assert!((reg_gamma_lower(theta, x).unwrap() - p).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gamma_quantile_domain_errors() {
        assert!(gamma_quantile(0.0, 1.0).is_err());
        assert!(gamma_quantile(1.0, 1.0).is_err());
        assert!(gamma_quantile(0.5, 0.0).is_err());
        assert!(gamma_quantile(0.5, -1.0).is_err());
    }

    #[test]
    fn poisson_and_binomial_cdfs() {
        assert!((poisson_cdf(0, 2.0f64.ln()).unwrap() - 0.5).abs() < 1e-14);
        assert!((poisson_cdf(2, 2.0).unwrap() - 5.0 * (-2.0f64).exp()).abs() < 1e-14);
        // Bin(3, 1/2) <= 1 has probability 1/2
        assert!((binomial_cdf(1, 3, 0.5).unwrap() - 0.5).abs() < 1e-13);
        assert_eq!(binomial_cdf(-1, 5, 0.3).unwrap(), 0.0);
        assert_eq!(binomial_cdf(5, 5, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn choose_f_matches_log_form() {
        for n in 0..30u64 {
            for k in 0..=n {
                let a = choose_f(n, k);
                let b = ln_choose(n, k).exp();
                assert!((a - b).abs() < 1e-6 * a.max(1.0));
            }
        }
        assert_eq!(choose_f(3, 5), 0.0);
    }
}
