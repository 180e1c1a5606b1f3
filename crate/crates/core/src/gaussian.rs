//! Gaussian reference theory: the Poisson approximation h_k, exceedance
//! intensity lambda(t), closed forms for G_k and f_k with independent
//! coordinates, quantile windows, normal comparison bounds, the
//! diagonal-covariance Edgeworth corrections Q and Q_hat, and the
//! Cornish-Fisher critical-value predictor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dist::{
    binomial_cdf, choose_f, hermite, ln_choose, normal_pdf, normal_pdf_deriv, normal_quantile,
    normal_sf, poisson_cdf,
};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::cholesky;
use crate::stats::exceedance_count;

/// h_k(lambda) = P(Poisson(lambda) <= k - 1) = e^{-lambda} sum_{m<k} lambda^m / m!.
pub fn hk(k: usize, lambda: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("hk requires k >= 1"));
    }
    if lambda < 0.0 {
        return Err(Error::Domain("hk requires lambda >= 0"));
    }
    poisson_cdf(k as i64 - 1, lambda)
}

/// The unique Lambda_{k,eps} > 0 with h_k(Lambda) = eps / 8, by bisection to
/// |h_k(Lambda) - eps/8| < 1e-12.
pub fn solve_lambda_eps(k: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain("solve_lambda_eps requires eps in (0, 1/2)"));
    }
    let target = eps / 8.0;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hk(k, hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Domain("solve_lambda_eps failed to bracket"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = hk(k, mid)?;
        if (v - target).abs() < 1e-12 {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Marginal scales sigma_j of the Gaussian reference vector.
#[derive(Clone, Debug)]
pub struct GaussianMarginals {
    pub sigmas: Vec<f64>,
}

impl GaussianMarginals {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Domain("marginal scales must be positive"));
        }
        Ok(GaussianMarginals { sigmas })
    }

    pub fn equal(d: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; d])
    }

    /// Extract marginal scales from a diagonal covariance matrix; rejects
    /// matrices with any off-diagonal mass.
    pub fn from_diagonal_covariance(sigma: &DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        let mut max_off = 0.0f64;
        for j in 0..d {
            for l in 0..d {
                if j != l {
                    max_off = max_off.max(sigma[(j, l)].abs());
                }
            }
        }
        if max_off > 0.0 {
            return Err(Error::NotDiagonal { max_offdiag: max_off });
        }
        Self::new((0..d).map(|j| sigma[(j, j)].sqrt()).collect())
    }

    pub fn d(&self) -> usize {
        self.sigmas.len()
    }

    /// a_sigma = (min sigma)^2 / (max sigma)^2.
    pub fn a_sigma(&self) -> f64 {
        let lo = self.sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.sigmas.iter().cloned().fold(0.0f64, f64::max);
        (lo * lo) / (hi * hi)
    }
}

/// Exceedance intensity lambda(t) = sum_j P(Z_j > t) = sum_j Phi_bar(t / sigma_j).
pub fn lambda_t(t: f64, marg: &GaussianMarginals) -> f64 {
    marg.sigmas.iter().map(|&s| normal_sf(t / s)).sum()
}

/// G_k(t) = P(T_{Z,(k)} <= t) for d independent N(0, sigma^2) coordinates:
/// the Binomial(d, Phi_bar(t/sigma)) CDF at k - 1.
pub fn gk_independent(t: f64, d: usize, k: usize, sigma: f64) -> Result<f64> {
    check_dk(d, k)?;
    check_sigma(sigma)?;
    binomial_cdf(k as i64 - 1, d as u64, normal_sf(t / sigma))
}

/// f_k(t) = G_k'(t) = d C(d-1, k-1) p^{k-1} (1-p)^{d-k} phi(t/sigma)/sigma
/// with p = Phi_bar(t/sigma).
pub fn fk_independent(t: f64, d: usize, k: usize, sigma: f64) -> Result<f64> {
    check_dk(d, k)?;
    check_sigma(sigma)?;
    let p = normal_sf(t / sigma);
    let q = 1.0 - p;
    if p <= 0.0 || q <= 0.0 {
        return Ok(0.0);
    }
    let ln_f = (d as f64).ln()
        + ln_choose(d as u64 - 1, k as u64 - 1)
        + (k as f64 - 1.0) * p.ln()
        + (d as f64 - k as f64) * q.ln()
        + (normal_pdf(t / sigma) / sigma).ln();
    Ok(ln_f.exp())
}

/// Analytic derivative of f_k; validated against central differences.
pub fn fk_independent_deriv(t: f64, d: usize, k: usize, sigma: f64) -> Result<f64> {
    check_dk(d, k)?;
    check_sigma(sigma)?;
    let p = normal_sf(t / sigma);
    let q = 1.0 - p;
    if p <= 0.0 || q <= 0.0 {
        return Ok(0.0);
    }
    let f = fk_independent(t, d, k, sigma)?;
    let phi_s = normal_pdf(t / sigma) / sigma;
    let mut factor = -t / (sigma * sigma);
    if k >= 2 {
        factor -= phi_s * (k as f64 - 1.0) / p;
    }
    if d > k {
        factor += phi_s * (d as f64 - k as f64) / q;
    }
    Ok(f * factor)
}

/// Gaussian quantile c^G_{p,k} = G_k^{-1}(p) for independent equal-variance
/// coordinates, by bisection.
pub fn gk_inverse_independent(p: f64, d: usize, k: usize, sigma: f64) -> Result<f64> {
    check_dk(d, k)?;
    check_sigma(sigma)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("gk_inverse requires p in (0,1)"));
    }
    let mut lo = -1.0f64;
    let mut hi = 1.0f64;
    while gk_independent(lo, d, k, sigma)? > p {
        lo *= 2.0;
    }
    while gk_independent(hi, d, k, sigma)? < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = gk_independent(mid, d, k, sigma)?;
        if (v - p).abs() < 1e-12 && hi - lo < 1e-9 {
            return Ok(mid);
        }
        if v < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quantile window T_{k,eps} = [c^G_{eps/2,k}, c^G_{1-eps/2,k}] for the
/// independent equal-variance case, with the t^2 / log d boundedness
/// diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct QuantileWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    /// t_lo^2 / log d.
    pub ratio_lo: f64,
    /// t_hi^2 / log d.
    pub ratio_hi: f64,
}

pub fn quantile_window(k: usize, eps: f64, d: usize, sigma: f64) -> Result<QuantileWindow> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain("quantile_window requires eps in (0,1)"));
    }
    let t_lo = gk_inverse_independent(eps / 2.0, d, k, sigma)?;
    let t_hi = gk_inverse_independent(1.0 - eps / 2.0, d, k, sigma)?;
    let ld = (d as f64).ln();
    Ok(QuantileWindow {
        t_lo,
        t_hi,
        ratio_lo: t_lo * t_lo / ld,
        ratio_hi: t_hi * t_hi / ld,
    })
}

/// Monte Carlo estimate of G_k(t) = P(T_{Z,(k)} <= t) for Z ~ N(0, R);
/// returns (estimate, standard error). The oracle for every correlated-case
/// claim. Computed through the exceedance-count identity
/// {T_{Z,(k)} <= t} = {N_Z(t) <= k - 1}.
pub fn gk_montecarlo(
    t: f64,
    r: &DMatrix<f64>,
    k: usize,
    reps: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    let d = r.nrows();
    check_dk(d, k)?;
    if reps == 0 {
        return Err(Error::Domain("gk_montecarlo requires reps >= 1"));
    }
    let chol = cholesky(r)?;
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.child(rep as u64).rng();
            let mut eps = vec![0.0; d];
            let mut z = vec![0.0; d];
            for e in eps.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            chol.apply(&eps, &mut z);
            let below = exceedance_count(&z, t) <= k - 1;
            debug_assert_eq!(
                below,
                crate::stats::kth_order_stat(&z, k).unwrap() <= t,
                "exceedance/order-statistic duality"
            );
            below as usize
        })
        .sum();
    let p = hits as f64 / reps as f64;
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    Ok((p, se))
}

/// Exact |Binomial(d, p) CDF - Poisson(dp) CDF| at k - 1: the
/// independent-equal-variance specialization of the Poisson gap.
pub fn binomial_poisson_gap(d: usize, p: f64, k: usize) -> Result<f64> {
    check_dk(d, k)?;
    let b = binomial_cdf(k as i64 - 1, d as u64, p)?;
    let h = poisson_cdf(k as i64 - 1, d as f64 * p)?;
    Ok((b - h).abs())
}

/// Monte Carlo Poisson-approximation gap |G_k(t) - h_k(lambda(t))| together
/// with the eta_d-style bound C (d^{-a_sigma} (log d)^{-1/2} + rho_d log d).
#[derive(Clone, Copy, Debug)]
pub struct PoissonGapReport {
    pub lambda: f64,
    pub gap: f64,
    pub se: f64,
    pub bound: f64,
    /// Gap exceeds the bound by more than 4 Monte Carlo standard errors
    /// (only meaningful when the weak-correlation assumption holds; reported
    /// either way).
    pub exceeds: bool,
}

pub fn poisson_gap(
    t: f64,
    marg: &GaussianMarginals,
    k: usize,
    r: &DMatrix<f64>,
    reps: usize,
    c_bound: f64,
    stream: Stream,
) -> Result<PoissonGapReport> {
    let d = marg.d();
    if r.nrows() != d {
        return Err(Error::Domain("marginals and correlation dimension mismatch"));
    }
    let lambda = lambda_t(t, marg);
    let (g_hat, se) = gk_montecarlo(t, r, k, reps, stream)?;
    let h = hk(k, lambda)?;
    let gap = (g_hat - h).abs();
    let mut rho_d = 0.0f64;
    for j in 0..d {
        for l in 0..j {
            rho_d = rho_d.max(r[(j, l)].abs());
        }
    }
    let ld = (d as f64).ln();
    let bound = c_bound * ((d as f64).powf(-marg.a_sigma()) / ld.sqrt() + rho_d * ld);
    Ok(PoissonGapReport { lambda, gap, se, bound, exceeds: gap > bound + 4.0 * se })
}

/// Berman--Li--Shao comparison bound against the independent Gaussian law:
/// (2 pi sqrt(1 - rho_bar^2))^{-1} sum_{j<l} |r_jl| exp{-(u_j^2+u_l^2)/(2(1+rho_bar))}.
pub fn berman_bound(r: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
    let s = r.nrows();
    if r.ncols() != s || u.len() != s {
        return Err(Error::Domain("berman_bound requires square R and matching u"));
    }
    let mut rho_bar = 0.0f64;
    for j in 0..s {
        for l in 0..j {
            rho_bar = rho_bar.max(r[(j, l)].abs());
        }
    }
    if rho_bar >= 1.0 {
        return Err(Error::Domain("berman_bound requires max |r_jl| < 1"));
    }
    let prefactor = 1.0 / (2.0 * std::f64::consts::PI * (1.0 - rho_bar * rho_bar).sqrt());
    let mut acc = 0.0;
    for j in 0..s {
        for l in (j + 1)..s {
            acc += r[(j, l)].abs()
                * (-(u[j] * u[j] + u[l] * u[l]) / (2.0 * (1.0 + rho_bar))).exp();
        }
    }
    Ok(prefactor * acc)
}

/// Inputs of the Edgeworth corrections under diagonal covariance: diagonal
/// third-cumulant entries kappa_{3,j} (population E[X_bar^3] or their sample
/// analogues), the diagonal variance deviations (b_bar^2 - Sigma)_jj, the
/// multiplier third moment gamma, the sample size, and the truncation order.
#[derive(Clone, Debug)]
pub struct EdgeworthInputs {
    pub third_cumulants: Vec<f64>,
    pub var_devs: Vec<f64>,
    pub gamma: f64,
    pub n: usize,
    pub k0: usize,
}

impl EdgeworthInputs {
    /// k0 = ceil(A log(1 / eps_n)) with A = 4, capped at 40.
    pub fn default_k0(eps_n: f64) -> usize {
        let v = (4.0 * (1.0 / eps_n).ln()).ceil();
        (v.max(1.0) as usize).min(40)
    }
}

// Per-coordinate factors of the diagonal-covariance subset sums: under a
// diagonal Sigma the orthant integrals of the projected densities factor
// coordinatewise, int_t^inf phi_sigma^{(m)}(u) du = -phi_sigma^{(m-1)}(t)
// for m >= 1, so
//   M_{n,s}(t) - M_{Z,s}(t) = sum_j g_j e_{s-1}(p_{-j}),
// with p_l = Phi_bar(t/sigma_l) and g_j the coordinate's correction weight.
// The subset sums are accumulated by dynamic programming over elementary
// symmetric functions: O(d k0), never by subset enumeration.
struct DiagonalCorrection {
    /// A_s = sum_j g_j e_{s-1}(p_{-j}), indexed s = 1..=smax.
    a: Vec<f64>,
    /// dA_s/dt (only when requested).
    a_dot: Option<Vec<f64>>,
}

fn diagonal_correction(
    t: f64,
    marg: &GaussianMarginals,
    g: &[f64],
    g_dot: Option<&[f64]>,
    smax: usize,
) -> DiagonalCorrection {
    let d = marg.d();
    let rmax = smax - 1; // need e_0 .. e_{smax-1}
    let p: Vec<f64> = marg.sigmas.iter().map(|&s| normal_sf(t / s)).collect();

    // global elementary symmetric polynomials E_r of p
    let mut e = vec![0.0; rmax + 1];
    e[0] = 1.0;
    for &pj in &p {
        for r in (1..=rmax).rev() {
            e[r] += pj * e[r - 1];
        }
    }

    let mut a = vec![0.0; smax + 1];
    let mut f = vec![0.0; rmax + 1];
    // pass 1: A_s and, if needed, E_dot_r = sum_l p_l' e_{r-1}(p_{-l})
    let mut e_dot = vec![0.0; rmax + 1];
    let p_dot: Vec<f64> =
        marg.sigmas.iter().map(|&s| -normal_pdf(t / s) / s).collect();
    for j in 0..d {
        f[0] = 1.0;
        for r in 1..=rmax {
            f[r] = e[r] - p[j] * f[r - 1];
        }
        for s in 1..=smax {
            a[s] += g[j] * f[s - 1];
        }
        if g_dot.is_some() {
            for r in 1..=rmax {
                e_dot[r] += p_dot[j] * f[r - 1];
            }
        }
    }

    let a_dot = g_dot.map(|gd| {
        let mut adot = vec![0.0; smax + 1];
        let mut fdot = vec![0.0; rmax + 1];
        for j in 0..d {
            f[0] = 1.0;
            fdot[0] = 0.0;
            for r in 1..=rmax {
                f[r] = e[r] - p[j] * f[r - 1];
                fdot[r] = e_dot[r] - p_dot[j] * f[r - 1] - p[j] * fdot[r - 1];
            }
            for s in 1..=smax {
                adot[s] += gd[j] * f[s - 1] + g[j] * fdot[s - 1];
            }
        }
        adot
    });

    DiagonalCorrection { a, a_dot }
}

fn q_weights(k: usize, smax: usize) -> Vec<f64> {
    // weight of A_s in Q: -(-1)^{s-k} C(s-1, k-1)
    (0..=smax)
        .map(|s| {
            if s < k {
                0.0
            } else {
                let sign = if (s - k) % 2 == 0 { 1.0 } else { -1.0 };
                -sign * choose_f(s as u64 - 1, k as u64 - 1)
            }
        })
        .collect()
}

fn check_inputs(k: usize, inputs: &EdgeworthInputs, marg: &GaussianMarginals) -> Result<usize> {
    let d = marg.d();
    if k == 0 || k > d {
        return Err(Error::IndexError { k, d });
    }
    if inputs.third_cumulants.len() != d || inputs.var_devs.len() != d {
        return Err(Error::Domain("Edgeworth input vectors must have length d"));
    }
    if inputs.k0 < k {
        return Err(Error::Domain("Edgeworth truncation order k0 must be >= k"));
    }
    if inputs.n == 0 {
        return Err(Error::Domain("Edgeworth inputs require n >= 1"));
    }
    Ok(inputs.k0.min(d))
}

/// Population correction Q_{n,k}(t) under diagonal covariance:
/// Q_{n,k}(t) = -sum_{s=k}^{k0} (-1)^{s-k} C(s-1,k-1) {M_{n,s}(t) - M_{Z,s}(t)},
/// with the diagonal closed-form reduction of the orthant integrals.
pub fn q_correction_diag(
    t: f64,
    k: usize,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
) -> Result<f64> {
    let smax = check_inputs(k, inputs, marg)?;
    let coef = 1.0 / (6.0 * (inputs.n as f64).sqrt());
    let g: Vec<f64> = marg
        .sigmas
        .iter()
        .zip(&inputs.third_cumulants)
        .map(|(&s, &k3)| coef * k3 * normal_pdf_deriv(2, t, s))
        .collect();
    let corr = diagonal_correction(t, marg, &g, None, smax);
    let w = q_weights(k, smax);
    Ok((k..=smax).map(|s| w[s] * corr.a[s]).sum())
}

fn q_hat_factors(
    t: f64,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
) -> (Vec<f64>, Vec<f64>) {
    let coef = inputs.gamma / (6.0 * (inputs.n as f64).sqrt());
    let mut g = Vec::with_capacity(marg.d());
    let mut g_dot = Vec::with_capacity(marg.d());
    for j in 0..marg.d() {
        let s = marg.sigmas[j];
        let v = inputs.var_devs[j];
        let k3 = inputs.third_cumulants[j];
        g.push(-0.5 * v * normal_pdf_deriv(1, t, s) + coef * k3 * normal_pdf_deriv(2, t, s));
        g_dot.push(-0.5 * v * normal_pdf_deriv(2, t, s) + coef * k3 * normal_pdf_deriv(3, t, s));
    }
    (g, g_dot)
}

/// Bootstrap correction Q_hat_{n,gamma,k}(t) under diagonal covariance;
/// includes the diagonal <b_bar^2 - Sigma, grad^2 phi> contribution.
pub fn q_hat_correction_diag(
    t: f64,
    k: usize,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
) -> Result<f64> {
    let smax = check_inputs(k, inputs, marg)?;
    let (g, _) = q_hat_factors(t, inputs, marg);
    let corr = diagonal_correction(t, marg, &g, None, smax);
    let w = q_weights(k, smax);
    Ok((k..=smax).map(|s| w[s] * corr.a[s]).sum())
}

/// (Q_hat, dQ_hat/dt) with the derivative taken analytically through the
/// per-coordinate factors.
pub fn q_hat_correction_diag_with_deriv(
    t: f64,
    k: usize,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
) -> Result<(f64, f64)> {
    let smax = check_inputs(k, inputs, marg)?;
    let (g, g_dot) = q_hat_factors(t, inputs, marg);
    let corr = diagonal_correction(t, marg, &g, Some(&g_dot), smax);
    let w = q_weights(k, smax);
    let q = (k..=smax).map(|s| w[s] * corr.a[s]).sum();
    let a_dot = corr.a_dot.expect("derivative requested");
    let qd = (k..=smax).map(|s| w[s] * a_dot[s]).sum();
    Ok((q, qd))
}

/// Closed-form M_{n,s}(t) - M_{Z,s}(t) for one s (population third cumulants).
pub fn m_ns_diff_diag(
    t: f64,
    s: usize,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
) -> Result<f64> {
    if s == 0 || s > marg.d() {
        return Err(Error::Domain("subset size s outside [1, d]"));
    }
    let coef = 1.0 / (6.0 * (inputs.n as f64).sqrt());
    let g: Vec<f64> = marg
        .sigmas
        .iter()
        .zip(&inputs.third_cumulants)
        .map(|(&sg, &k3)| coef * k3 * normal_pdf_deriv(2, t, sg))
        .collect();
    let corr = diagonal_correction(t, marg, &g, None, s);
    Ok(corr.a[s])
}

/// Exact M_{Z,s}(t) = e_s(p_1, ..., p_d) for diagonal covariance.
pub fn m_zs_diag(t: f64, s: usize, marg: &GaussianMarginals) -> Result<f64> {
    if s == 0 || s > marg.d() {
        return Err(Error::Domain("subset size s outside [1, d]"));
    }
    let p: Vec<f64> = marg.sigmas.iter().map(|&sg| normal_sf(t / sg)).collect();
    let mut e = vec![0.0; s + 1];
    e[0] = 1.0;
    for &pj in &p {
        for r in (1..=s.min(e.len() - 1)).rev() {
            e[r] += pj * e[r - 1];
        }
    }
    Ok(e[s])
}

/// Which projected density the Monte Carlo subset-sum oracle integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectedDensity {
    /// p_{n,I}: third-cumulant correction only.
    Population,
    /// p_hat_{n,gamma,I}: variance deviations plus gamma-weighted third moments.
    BootstrapGamma,
}

/// Monte Carlo oracle for M_{n,s}(t) = sum_{|I|=s} int_{(t,inf)^s} p_{n,I}.
///
/// Per subset, the orthant integral is estimated by importance sampling
/// against phi_I conditioned on the orthant (exact truncated-normal draws),
/// so each draw contributes (prod_j p_j) x density ratio. Subsets are
/// enumerated when C(d, s) <= subset_budget and sampled uniformly (with the
/// C(d,s)/budget scaling) otherwise. Returns (estimate, standard error).
#[allow(clippy::too_many_arguments)]
pub fn m_ns_mc_oracle(
    t: f64,
    s: usize,
    inputs: &EdgeworthInputs,
    marg: &GaussianMarginals,
    density: ProjectedDensity,
    subset_budget: usize,
    reps_per_subset: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    let d = marg.d();
    if s == 0 || s > d {
        return Err(Error::Domain("subset size s outside [1, d]"));
    }
    if inputs.third_cumulants.len() != d || inputs.var_devs.len() != d {
        return Err(Error::Domain("Edgeworth input vectors must have length d"));
    }
    if subset_budget == 0 || reps_per_subset == 0 {
        return Err(Error::Domain("oracle needs a positive budget"));
    }
    let coef3 = match density {
        ProjectedDensity::Population => 1.0 / (6.0 * (inputs.n as f64).sqrt()),
        ProjectedDensity::BootstrapGamma => inputs.gamma / (6.0 * (inputs.n as f64).sqrt()),
    };
    let use_var = density == ProjectedDensity::BootstrapGamma;
    let p: Vec<f64> = marg.sigmas.iter().map(|&sg| normal_sf(t / sg)).collect();

    let total = choose_f(d as u64, s as u64);
    let enumerate = total <= subset_budget as f64;
    let subsets: Vec<Vec<usize>> = if enumerate {
        all_subsets(d, s)
    } else {
        let mut rng = stream.child(0).rng();
        (0..subset_budget)
            .map(|_| {
                let mut idx: Vec<usize> = Vec::with_capacity(s);
                while idx.len() < s {
                    let j = rng.gen_range(0..d);
                    if !idx.contains(&j) {
                        idx.push(j);
                    }
                }
                idx
            })
            .collect()
    };

    let per_subset: Vec<(f64, f64)> = subsets
        .par_iter()
        .enumerate()
        .map(|(si, idx)| {
            let mut rng = stream.child(1).child(si as u64).rng();
            let orthant_mass: f64 = idx.iter().map(|&j| p[j]).product();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..reps_per_subset {
                let mut ratio = 1.0;
                for &j in idx {
                    let v: f64 = rng.gen();
                    // conditional draw of Z_j | Z_j > t, via the tail inverse
                    let tail = (p[j] * v).clamp(1e-300, 1.0 - 1e-16);
                    let x = -normal_quantile(tail).expect("tail in (0,1)");
                    ratio += coef3 * inputs.third_cumulants[j] * hermite(3, x)
                        / marg.sigmas[j].powi(3);
                    if use_var {
                        ratio += 0.5 * inputs.var_devs[j] * hermite(2, x)
                            / (marg.sigmas[j] * marg.sigmas[j]);
                    }
                }
                sum += ratio;
                sumsq += ratio * ratio;
            }
            let m = reps_per_subset as f64;
            let mean = sum / m;
            let var = (sumsq / m - mean * mean).max(0.0) / m;
            (orthant_mass * mean, orthant_mass * orthant_mass * var)
        })
        .collect();

    if enumerate {
        let est: f64 = per_subset.iter().map(|&(e, _)| e).sum();
        let var: f64 = per_subset.iter().map(|&(_, v)| v).sum();
        Ok((est, var.sqrt()))
    } else {
        let m = per_subset.len() as f64;
        let mean = per_subset.iter().map(|&(e, _)| e).sum::<f64>() / m;
        let between = per_subset
            .iter()
            .map(|&(e, _)| (e - mean) * (e - mean))
            .sum::<f64>()
            / m;
        let within = per_subset.iter().map(|&(_, v)| v).sum::<f64>() / m;
        let se = total * ((between + within) / m).sqrt();
        Ok((total * mean, se))
    }
}

fn all_subsets(d: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        out.push(idx.clone());
        // next combination in lexicographic order
        let mut i = s;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + d - s {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Cornish-Fisher prediction of the bootstrap critical value:
/// predicted = c^G - Q_hat/f_k + [f_k'/(2 f_k^3)] Q_hat^2 - [Q_hat'/f_k^2] Q_hat.
#[derive(Clone, Copy, Debug)]
pub struct CFExpansion {
    pub c_gauss: f64,
    pub linear_term: f64,
    pub quadratic_term: f64,
    pub predicted: f64,
}

/// Predict c_hat_{1-alpha,k} for independent equal-variance coordinates.
pub fn cornish_fisher_predict(
    alpha: f64,
    k: usize,
    d: usize,
    sigma: f64,
    inputs: &EdgeworthInputs,
    eps: f64,
) -> Result<CFExpansion> {
    if !(alpha > eps && alpha < 1.0 - eps) {
        return Err(Error::WindowError { alpha, eps });
    }
    let c = gk_inverse_independent(1.0 - alpha, d, k, sigma)?;
    let marg = GaussianMarginals::equal(d, sigma)?;
    let (qhat, qhat_d) = q_hat_correction_diag_with_deriv(c, k, inputs, &marg)?;
    let f = fk_independent(c, d, k, sigma)?;
    let fd = fk_independent_deriv(c, d, k, sigma)?;
    if f <= 0.0 {
        return Err(Error::Domain("f_k vanishes at the requested quantile"));
    }
    let linear = -qhat / f;
    let quadratic = fd / (2.0 * f * f * f) * qhat * qhat - qhat_d / (f * f) * qhat;
    Ok(CFExpansion {
        c_gauss: c,
        linear_term: linear,
        quadratic_term: quadratic,
        predicted: c + linear + quadratic,
    })
}

/// Truncated inclusion-exclusion for the indicator 1{N >= k}:
/// returns (sum_{s=k}^{min(m,N)} (-1)^{s-k} C(s-1,k-1) C(N,s),
///          Bonferroni bound C(m, k-1) C(N, m+1)).
/// At m >= N the sum equals the indicator exactly (integer arithmetic up to
/// N, m <= 40; f64 products beyond).
pub fn inclusion_exclusion_indicator(n_value: u64, k: u64, m: u64) -> Result<(f64, f64)> {
    if k == 0 || m < k {
        return Err(Error::Domain("inclusion-exclusion requires 1 <= k <= m"));
    }
    let top = m.min(n_value);
    let sum = if n_value <= 40 && m <= 40 {
        let mut acc: i128 = 0;
        for s in k..=top {
            let term = (crate::dist::choose_u128(s - 1, k - 1)
                * crate::dist::choose_u128(n_value, s)) as i128;
            acc += if (s - k) % 2 == 0 { term } else { -term };
        }
        acc as f64
    } else {
        let mut acc = 0.0;
        for s in k..=top {
            let sign = if (s - k) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * choose_f(s - 1, k - 1) * choose_f(n_value, s);
        }
        acc
    };
    let bound = choose_f(m, k - 1) * choose_f(n_value, m + 1);
    Ok((sum, bound))
}

fn check_dk(d: usize, k: usize) -> Result<()> {
    if d == 0 || k == 0 || k > d {
        Err(Error::IndexError { k, d })
    } else {
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain("sigma must be positive"))
    }
}
