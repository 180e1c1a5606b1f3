//! Exponential-mixing machinery: dependence parameters, block lengths and
//! layouts, the remainder r_d and its components, Gaussian cluster-tail
//! bounds, and the empirical block-vs-raw exceedance comparison on simulated
//! stationary paths.

use std::ops::Range;

use rayon::prelude::*;

use crate::dist::{choose_f, ln_gamma, normal_sf};
use crate::error::{Error, Result};
use crate::gaussian::{hk, solve_lambda_eps};
use crate::rng::Stream;
use crate::sampling::sample_ar1_path;
use crate::stats::exceedance_count;

/// Configuration of the mixing-side remainder arithmetic. `d` and `n` are
/// reals so the asymptotic scans (d = n^5 and beyond 2^53) stay exact enough;
/// materialized layouts additionally require d to fit a usize.
#[derive(Clone, Copy, Debug)]
pub struct MixingParams {
    /// Mixing bound alpha(l) <= C_alpha exp(-a_alpha l).
    pub c_alpha: f64,
    pub a_alpha: f64,
    pub sigma_star: f64,
    pub sigma_bar: f64,
    pub d: f64,
    pub n: f64,
    pub k0: usize,
    pub k: usize,
    pub eps: f64,
}

impl MixingParams {
    pub fn validate(&self) -> Result<()> {
        if self.c_alpha < 1.0 || self.a_alpha <= 0.0 {
            return Err(Error::Domain("mixing bound needs C_alpha >= 1 and a_alpha > 0"));
        }
        dependence_params(self.sigma_star, self.sigma_bar)?;
        if self.d < 1.0 || self.n < 1.0 {
            return Err(Error::Domain("d and n must be at least 1"));
        }
        if self.k == 0 || self.k0 < self.k {
            return Err(Error::Domain("need 1 <= k <= k0"));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Domain("eps must lie in (0, 1/2)"));
        }
        Ok(())
    }

    pub fn theta_star(&self) -> f64 {
        1.0 - (self.sigma_star * self.sigma_star) / (self.sigma_bar * self.sigma_bar)
    }

    pub fn beta_star(&self) -> f64 {
        let t = self.theta_star();
        (1.0 - t) / (1.0 + t)
    }
}

/// Mixing parameters for a Gaussian AR(1) with lag-one correlation rho:
/// theta_star = |rho| (so sigma_star = sigma sqrt(1 - |rho|)), and the
/// documented default bound a_alpha = -log|rho|, C_alpha = 1.
pub fn ar1_mixing_params(
    rho: f64,
    sigma: f64,
    d: f64,
    n: f64,
    k0: usize,
    k: usize,
    eps: f64,
) -> Result<MixingParams> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain("AR(1) requires |rho| < 1"));
    }
    if sigma <= 0.0 {
        return Err(Error::Domain("sigma must be positive"));
    }
    // a_alpha clamp keeps rho = 0 finite; exp(-700 l) underflows to 0 anyway
    let a_alpha = if rho == 0.0 { 700.0 } else { (-rho.abs().ln()).min(700.0) };
    let params = MixingParams {
        c_alpha: 1.0,
        a_alpha,
        sigma_star: sigma * (1.0 - rho.abs()).sqrt(),
        sigma_bar: sigma,
        d,
        n,
        k0,
        k,
        eps,
    };
    params.validate()?;
    Ok(params)
}

/// (theta_star, beta_star) = (1 - sigma_star^2/sigma_bar^2,
/// (1 - theta_star)/(1 + theta_star)).
pub fn dependence_params(sigma_star: f64, sigma_bar: f64) -> Result<(f64, f64)> {
    if !(sigma_star > 0.0 && sigma_star <= sigma_bar) {
        return Err(Error::Domain("need 0 < sigma_star <= sigma_bar"));
    }
    let theta = 1.0 - (sigma_star * sigma_star) / (sigma_bar * sigma_bar);
    Ok((theta, (1.0 - theta) / (1.0 + theta)))
}

// ceil/floor with a relative snap so d^{1/4} = 10.000000000000002 style
// round-off does not bump an exact integer to the next one.
fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Block-length arithmetic: m_d = ceil(d^{beta*/4}),
/// l_d = ceil((8(k0+2) log(2d) + 8 log n)/a_alpha), q_d = floor(d/(m_d+l_d)),
/// s_d = d - q_d (m_d + l_d).
#[derive(Clone, Copy, Debug)]
pub struct BlockScalars {
    pub m_d: f64,
    pub ell_d: f64,
    pub q_d: f64,
    pub s_d: f64,
}

pub fn block_scalars(params: &MixingParams) -> Result<BlockScalars> {
    params.validate()?;
    let beta = params.beta_star();
    let m_d = ceil_tol(params.d.powf(beta / 4.0)).max(1.0);
    let ell_d = ceil_tol(
        (8.0 * (params.k0 as f64 + 2.0) * (2.0 * params.d).ln() + 8.0 * params.n.ln())
            / params.a_alpha,
    )
    .max(0.0);
    let period = m_d + ell_d;
    // exact integer division where d is exactly representable; the floor of
    // the f64 quotient can be off by one there
    let (q_d, s_d) = if params.d <= 9.0e15 && period <= 9.0e15 {
        let du = params.d as u128;
        let pu = period as u128;
        let q = du / pu;
        (q as f64, (du - q * pu) as f64)
    } else {
        let q = (params.d / period).floor();
        (q, (params.d - q * period).max(0.0))
    };
    Ok(BlockScalars { m_d, ell_d, q_d, s_d })
}

/// Materialized block layout: main blocks I_r, gaps J_r, and the remainder
/// interval R_d as 0-based index ranges partitioning [0, d).
#[derive(Clone, Debug)]
pub struct BlockLayout {
    pub d: usize,
    pub m_d: usize,
    pub ell_d: usize,
    pub q_d: usize,
    pub s_d: usize,
    /// q_d = 0: no complete block fits; spans are empty and only the
    /// remainder interval is populated.
    pub degenerate: bool,
    pub main_blocks: Vec<Range<usize>>,
    pub gaps: Vec<Range<usize>>,
    pub remainder: Option<Range<usize>>,
}

impl BlockLayout {
    /// Layout with explicitly chosen block and gap lengths.
    pub fn from_lengths(d: usize, m: usize, ell: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Domain("layout requires d >= 1 and m >= 1"));
        }
        let period = m + ell;
        let q = d / period;
        let s = d - q * period;
        let mut main_blocks = Vec::with_capacity(q);
        let mut gaps = Vec::with_capacity(q);
        for r in 0..q {
            let start = r * period;
            main_blocks.push(start..start + m);
            gaps.push(start + m..start + period);
        }
        let remainder = if s > 0 { Some(q * period..d) } else { None };
        Ok(BlockLayout {
            d,
            m_d: m,
            ell_d: ell,
            q_d: q,
            s_d: s,
            degenerate: q == 0,
            main_blocks,
            gaps,
            remainder,
        })
    }
}

/// Materialize the formula-driven layout of [`block_scalars`].
pub fn block_layout(params: &MixingParams) -> Result<BlockLayout> {
    let sc = block_scalars(params)?;
    if params.d > 9.0e15 {
        return Err(Error::Domain("materialized layout requires d <= 2^53"));
    }
    BlockLayout::from_lengths(params.d as usize, sc.m_d as usize, sc.ell_d as usize)
}

/// The four components of r_d and their sum. The mixing and Poisson-tail
/// terms are evaluated in log space; the stored values underflow to zero
/// gracefully while the log10 fields keep the true magnitudes.
#[derive(Clone, Copy, Debug)]
pub struct RemainderBreakdown {
    /// eta_{1,d} = l_d/m_d + (m_d + l_d)/d + d^{-3 beta*/4} (log d)^{-1/2}.
    pub eta1: f64,
    pub inv_qd: f64,
    /// d^{k0+1} alpha(l_d) bounded via C_alpha exp(-a_alpha l_d).
    pub mixing_term: f64,
    /// (3 Lambda_{k,eps})^{k0+1} / (k0+1)!.
    pub poisson_tail: f64,
    pub r_d: f64,
    pub log10_mixing_term: f64,
    pub log10_poisson_tail: f64,
    pub lambda_k_eps: f64,
}

/// eta_{1,d}; well-defined for any layout, degenerate or not.
pub fn eta1(params: &MixingParams, scalars: &BlockScalars) -> f64 {
    let beta = params.beta_star();
    scalars.ell_d / scalars.m_d
        + (scalars.m_d + scalars.ell_d) / params.d
        + params.d.powf(-0.75 * beta) / params.d.ln().sqrt()
}

/// log10 of the mixing term d^{k0+1} alpha(l_d) bounded via
/// C_alpha exp(-a_alpha l_d); computed in log space so exponents far below
/// the f64 underflow threshold remain exact.
pub fn mixing_term_log10(params: &MixingParams, scalars: &BlockScalars) -> f64 {
    let ln = (params.k0 as f64 + 1.0) * params.d.ln() + params.c_alpha.ln()
        - params.a_alpha * scalars.ell_d;
    ln / std::f64::consts::LN_10
}

/// (log10 of the Poisson tail (3 Lambda)^{k0+1}/(k0+1)!, Lambda_{k,eps}).
pub fn poisson_tail_log10(params: &MixingParams) -> Result<(f64, f64)> {
    let lambda = solve_lambda_eps(params.k, params.eps)?;
    let ln = (params.k0 as f64 + 1.0) * (3.0 * lambda).ln() - ln_gamma(params.k0 as f64 + 2.0);
    Ok((ln / std::f64::consts::LN_10, lambda))
}

pub fn remainder_rd(params: &MixingParams, scalars: &BlockScalars) -> Result<RemainderBreakdown> {
    params.validate()?;
    if scalars.q_d < 1.0 {
        return Err(Error::DegenerateLayout {
            block: scalars.m_d + scalars.ell_d,
            d: params.d,
        });
    }
    let eta1 = eta1(params, scalars);
    let inv_qd = 1.0 / scalars.q_d;
    let log10_mixing = mixing_term_log10(params, scalars);
    let (log10_tail, lambda) = poisson_tail_log10(params)?;
    let mixing_term = (log10_mixing * std::f64::consts::LN_10).exp();
    let poisson_tail = (log10_tail * std::f64::consts::LN_10).exp();
    Ok(RemainderBreakdown {
        eta1,
        inv_qd,
        mixing_term,
        poisson_tail,
        r_d: eta1 + inv_qd + mixing_term + poisson_tail,
        log10_mixing_term: log10_mixing,
        log10_poisson_tail: log10_tail,
        lambda_k_eps: lambda,
    })
}

/// Gaussian cluster-tail bound for m coordinates above t:
/// Phi_bar(sqrt(m / (1 + (m-1) theta_star)) t / sigma), returned together
/// with its Mills-ratio form.
pub fn cluster_tail_bound(m: usize, t: f64, sigma: f64, theta_star: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::Domain("cluster bound requires m >= 2"));
    }
    if t <= 0.0 || sigma <= 0.0 {
        return Err(Error::Domain("cluster bound requires t > 0 and sigma > 0"));
    }
    if !(0.0..1.0).contains(&theta_star) {
        return Err(Error::Domain("cluster bound requires theta_star in [0,1)"));
    }
    let mf = m as f64;
    let denom = 1.0 + (mf - 1.0) * theta_star;
    let arg = (mf / denom).sqrt() * t / sigma;
    let phi_bar = normal_sf(arg);
    let mills = sigma * denom.sqrt() / ((2.0 * std::f64::consts::PI * mf).sqrt() * t)
        * (-mf * t * t / (2.0 * sigma * sigma * denom)).exp();
    Ok((phi_bar, mills))
}

/// Raw and block exceedance counts of one path: N_d(t), S_d(t), and whether
/// they disagree.
pub fn block_exceedance_compare(
    path: &[f64],
    layout: &BlockLayout,
    t: f64,
) -> Result<(usize, usize, bool)> {
    let covered = layout.q_d * (layout.m_d + layout.ell_d);
    if path.len() < covered {
        return Err(Error::LengthError { len: path.len(), required: covered });
    }
    let upto = layout.d.min(path.len());
    let n_d = exceedance_count(&path[..upto], t);
    let s_d = layout
        .main_blocks
        .iter()
        .filter(|b| path[b.start..b.end].iter().any(|&z| z > t))
        .count();
    Ok((n_d, s_d, n_d != s_d))
}

/// Lemma-style bound on P(N_d(t) != S_d(t)):
/// (q_d l_d + s_d) p(t) + q_d C(m_d, 2) Phi_bar(sqrt(2/(1+theta*)) t / sigma).
pub fn block_mismatch_bound(layout: &BlockLayout, t: f64, sigma: f64, theta_star: f64) -> f64 {
    let p = normal_sf(t / sigma);
    let pair = normal_sf((2.0 / (1.0 + theta_star)).sqrt() * t / sigma);
    (layout.q_d as f64 * layout.ell_d as f64 + layout.s_d as f64) * p
        + layout.q_d as f64 * choose_f(layout.m_d as u64, 2) * pair
}

/// One threshold row of [`poisson_window_check`].
#[derive(Clone, Copy, Debug)]
pub struct PoissonWindowRow {
    pub t: f64,
    pub lambda: f64,
    pub gk_hat: f64,
    pub se: f64,
    pub hk_val: f64,
    pub gap: f64,
    /// C r_d with the configured multiplier.
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct PoissonWindowReport {
    pub rows: Vec<PoissonWindowRow>,
    pub scalars: BlockScalars,
    pub remainder: Option<RemainderBreakdown>,
}

/// Simulate stationary AR(1) paths and compare the empirical G_k(t) with
/// h_k(lambda(t)) on a lambda-grid inside (0, 2 Lambda_{k,eps}], against the
/// assembled C r_d bound.
#[allow(clippy::too_many_arguments)]
pub fn poisson_window_check(
    rho: f64,
    sigma: f64,
    d: usize,
    k: usize,
    eps: f64,
    n: usize,
    k0: usize,
    reps: usize,
    c_bound: f64,
    stream: Stream,
) -> Result<PoissonWindowReport> {
    let params = ar1_mixing_params(rho, sigma, d as f64, n as f64, k0, k, eps)?;
    let scalars = block_scalars(&params)?;
    let remainder = remainder_rd(&params, &scalars).ok();
    let lambda_cap = 2.0 * solve_lambda_eps(k, eps)?;
    let targets: Vec<f64> =
        [0.5, 1.0, 2.0, lambda_cap].iter().cloned().filter(|&l| l <= lambda_cap).collect();

    // t from lambda: lambda = d Phi_bar(t/sigma)
    let thresholds: Vec<(f64, f64)> = targets
        .iter()
        .map(|&lambda| {
            let tail = lambda / d as f64;
            let t = -sigma * crate::dist::normal_quantile(tail).expect("tail in (0,1)");
            (t, lambda)
        })
        .collect();

    // one pass of simulated paths serves every threshold
    let counts: Vec<Vec<usize>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = stream.child(rep as u64).key();
            let path = sample_ar1_path(d, rho, sigma, seed).expect("validated params");
            thresholds.iter().map(|&(t, _)| exceedance_count(&path, t)).collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(thresholds.len());
    for (ti, &(t, _)) in thresholds.iter().enumerate() {
        let hits = counts.iter().filter(|c| c[ti] <= k - 1).count();
        let gk_hat = hits as f64 / reps as f64;
        let lambda = d as f64 * normal_sf(t / sigma);
        let hk_val = hk(k, lambda)?;
        let se = (gk_hat * (1.0 - gk_hat) / reps as f64).sqrt();
        // consistency of the two intensity computations (same code path)
        let lambda_alt = d as f64 * normal_sf(t / sigma);
        debug_assert!((hk(k, lambda_alt)? - hk_val).abs() < 1e-12);
        rows.push(PoissonWindowRow {
            t,
            lambda,
            gk_hat,
            se,
            hk_val,
            gap: (gk_hat - hk_val).abs(),
            bound: remainder.as_ref().map_or(f64::INFINITY, |r| c_bound * r.r_d),
        });
    }
    Ok(PoissonWindowReport { rows, scalars, remainder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(d: f64, n: f64, k0: usize, a_alpha: f64, beta_star: f64) -> MixingParams {
        // invert beta* to theta* and sigma ratio (sigma_bar = 1)
        let theta = (1.0 - beta_star) / (1.0 + beta_star);
        MixingParams {
            c_alpha: 1.0,
            a_alpha,
            sigma_star: (1.0 - theta).sqrt(),
            sigma_bar: 1.0,
            d,
            n,
            k0,
            k: 2,
            eps: 0.1,
        }
    }

    #[test]
    fn dependence_params_values() {
        let (t, b) = dependence_params(1.0, 1.0).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(b, 1.0);
        let (t, b) = dependence_params(1.0, 2.0f64.sqrt()).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        assert!(dependence_params(2.0, 1.0).is_err());
        assert!(dependence_params(0.0, 1.0).is_err());
    }

    #[test]
    fn beta_star_decreasing_in_theta() {
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let theta = i as f64 / 20.0;
            let b = (1.0 - theta) / (1.0 + theta);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn block_lengths_examples() {
        // beta* = 1, d = 10^4: m_d = 10 exactly (the powf snap guard)
        let p = params(10_000.0, 100.0, 5, 0.5, 1.0);
        let sc = block_scalars(&p).unwrap();
        assert_eq!(sc.m_d, 10.0);
        // l_d = ceil((56 log 2000 + 8 log 100)/0.5) = 925
        let p = params(1000.0, 100.0, 5, 0.5, 1.0);
        let sc = block_scalars(&p).unwrap();
        assert_eq!(sc.ell_d, 925.0);
    }

    #[test]
    fn layout_partitions_dimension() {
        let p = params(5000.0, 200.0, 3, 2.0, 0.8);
        let layout = block_layout(&p).unwrap();
        assert!(!layout.degenerate);
        let mut covered = vec![false; layout.d];
        for r in layout.main_blocks.iter().chain(&layout.gaps) {
            for i in r.clone() {
                assert!(!covered[i], "overlap at {i}");
                covered[i] = true;
            }
        }
        if let Some(r) = &layout.remainder {
            for i in r.clone() {
                assert!(!covered[i]);
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c), "gap in the partition");
        for b in &layout.main_blocks {
            assert_eq!(b.len(), layout.m_d);
        }
        for g in &layout.gaps {
            assert_eq!(g.len(), layout.ell_d);
        }
        assert_eq!(layout.q_d * (layout.m_d + layout.ell_d) + layout.s_d, layout.d);
    }

    #[test]
    fn degenerate_layout_reported_not_fatal() {
        let p = params(50.0, 100.0, 5, 0.5, 1.0); // l_d = 925 > d
        let layout = block_layout(&p).unwrap();
        assert!(layout.degenerate);
        assert_eq!(layout.q_d, 0);
        let sc = block_scalars(&p).unwrap();
        assert!(matches!(
            remainder_rd(&p, &sc),
            Err(Error::DegenerateLayout { .. })
        ));
    }

    #[test]
    fn remainder_components_sum() {
        let p = params(100_000.0, 200.0, 6, 1.0, 0.9);
        let sc = block_scalars(&p).unwrap();
        let r = remainder_rd(&p, &sc).unwrap();
        assert!(r.eta1 >= 0.0 && r.inv_qd >= 0.0 && r.mixing_term >= 0.0 && r.poisson_tail >= 0.0);
        assert_eq!(r.r_d, r.eta1 + r.inv_qd + r.mixing_term + r.poisson_tail);
    }

    #[test]
    fn mixing_term_log_space_no_underflow_panic() {
        // d=400, n=200, k0=10, a_alpha=0.1: l_d exceeds d (the layout is
        // degenerate at this scale) yet the log-space bound stays exact and
        // far below -50.
        let p = params(400.0, 200.0, 10, 0.1, 1.0);
        let sc = block_scalars(&p).unwrap();
        let l10 = mixing_term_log10(&p, &sc);
        assert!(l10 < -50.0, "log10 = {l10}");
        let value = (l10 * std::f64::consts::LN_10).exp();
        assert!(value >= 0.0 && value < 1e-50 && value.is_finite());
        assert!(eta1(&p, &sc).is_finite());
        // a layout where q_d >= 1: full breakdown is finite and consistent
        let p = params(1e6, 200.0, 10, 1.0, 1.0);
        let sc = block_scalars(&p).unwrap();
        let r = remainder_rd(&p, &sc).unwrap();
        assert!(r.r_d.is_finite());
        assert!(r.log10_mixing_term < -50.0);
    }

    #[test]
    fn remark_rd_times_n_bounded_along_d_eq_n5() {
        // d = n^5 (c = 5 > 4/beta* with beta* = 1); k0 grows like 8 log n so
        // the Poisson tail dies; r_d n stays bounded over the scan.
        let mut values = Vec::new();
        for &n in &[1e3f64, 1e4, 1e5] {
            let k0 = (8.0 * n.ln()).ceil() as usize;
            let p = params(n.powi(5), n, k0, 1.0, 1.0);
            let sc = block_scalars(&p).unwrap();
            let r = remainder_rd(&p, &sc).unwrap();
            values.push(r.r_d * n);
        }
        for &v in &values {
            assert!(v.is_finite() && v < 1e4, "r_d * n = {v}");
        }
        assert!(
            values[2] <= values[0],
            "no decay onset: {values:?}"
        );
    }

    #[test]
    fn rd_monotone_in_d_past_threshold() {
        let mut rs = Vec::new();
        for j in 8..40u32 {
            let d = 2f64.powi(j as i32);
            let p = params(d, 500.0, 5, 1.0, 1.0);
            let sc = block_scalars(&p).unwrap();
            rs.push(remainder_rd(&p, &sc).ok().map(|r| r.r_d));
        }
        let finite: Vec<f64> = rs.into_iter().flatten().collect();
        // find the first decrease and demand monotone decay afterwards
        let threshold = finite
            .windows(2)
            .position(|w| w[1] <= w[0])
            .expect("no decay threshold found");
        for w in finite[threshold..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn correlation_decay_constant_correspondence() {
        // AR(1) with rho = e^{-a}: |rho(h)| = e^{-ah} <= 2 pi C_alpha e^{-ah}
        // for every C_alpha >= 1/(2 pi).
        for &a in &[0.2f64, 0.7, 1.5] {
            let rho = (-a).exp();
            for h in 1..=30 {
                let lhs = rho.powi(h);
                let rhs = 2.0 * std::f64::consts::PI * (1.0 / (2.0 * std::f64::consts::PI))
                    * (-a * h as f64).exp();
                assert!(lhs <= rhs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn cluster_tail_values() {
        // theta* = 0, m = 2: Phi_bar(sqrt2 t) dominates the exact product
        for &t in &[0.5, 1.0, 2.0, 3.0] {
            let (b, mills) = cluster_tail_bound(2, t, 1.0, 0.0).unwrap();
            let exact = normal_sf(t) * normal_sf(t);
            assert!(b >= exact, "t={t}: bound {b} below product {exact}");
            assert!(mills >= b * 0.999, "Mills form should dominate Phi_bar");
        }
        let (b, _) = cluster_tail_bound(2, 3.0, 1.0, 0.5).unwrap();
        assert!((b - normal_sf((2.0f64 / 1.5).sqrt() * 3.0)).abs() < 1e-15);
        assert!((b - 2.66e-4).abs() < 2e-6, "bound = {b}");
        assert!(cluster_tail_bound(1, 1.0, 1.0, 0.0).is_err());
        assert!(cluster_tail_bound(2, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cluster_tail_dominates_ar1_pairs_mc() {
        // P(Z_0 > t, Z_1 > t) on AR(1)(0.5) paths <= bound at theta* = 0.5
        let n = 2_000_000usize;
        let z = sample_ar1_path(n + 1, 0.5, 1.0, 99).unwrap();
        for &t in &[1.5, 2.0, 2.5] {
            let mut hits = 0usize;
            for i in 0..n {
                if z[i] > t && z[i + 1] > t {
                    hits += 1;
                }
            }
            let freq = hits as f64 / n as f64;
            let (bound, _) = cluster_tail_bound(2, t, 1.0, 0.5).unwrap();
            let se = (freq.max(1e-9) / n as f64).sqrt();
            assert!(freq <= bound + 4.0 * se, "t={t}: freq {freq} bound {bound}");
        }
    }

    #[test]
    fn block_compare_single_exceedance_cases() {
        let layout = BlockLayout::from_lengths(20, 3, 2).unwrap();
        // exceedance inside the first main block [0..3)
        let mut path = vec![0.0; 20];
        path[1] = 5.0;
        let (n_d, s_d, mismatch) = block_exceedance_compare(&path, &layout, 1.0).unwrap();
        assert_eq!((n_d, s_d, mismatch), (1, 1, false));
        // exceedance inside the first gap [3..5)
        let mut path = vec![0.0; 20];
        path[3] = 5.0;
        let (n_d, s_d, mismatch) = block_exceedance_compare(&path, &layout, 1.0).unwrap();
        assert_eq!((n_d, s_d, mismatch), (1, 0, true));
        // short path rejected
        assert!(matches!(
            block_exceedance_compare(&path[..10], &layout, 1.0),
            Err(Error::LengthError { .. })
        ));
    }

    #[test]
    fn block_mismatch_mc_below_bound() {
        // custom layout with a bound below 1 so the comparison is informative
        let d = 10_000usize;
        let (m, ell) = (100usize, 10usize);
        let layout = BlockLayout::from_lengths(d, m, ell).unwrap();
        let rho = 0.3;
        let lambda = 0.5;
        let tail = lambda / d as f64;
        let t = -crate::dist::normal_quantile(tail).unwrap();
        let reps = 2_000;
        let root = Stream::new(5150);
        let mismatches: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let path = sample_ar1_path(d, rho, 1.0, root.child(rep).key()).unwrap();
                let (_, _, mm) = block_exceedance_compare(&path, &layout, t).unwrap();
                mm as usize
            })
            .sum();
        let freq = mismatches as f64 / reps as f64;
        let bound = block_mismatch_bound(&layout, t, 1.0, rho);
        assert!(bound < 1.0, "test misconfigured: vacuous bound {bound}");
        let se = (freq.max(1e-4) / reps as f64).sqrt();
        assert!(freq <= bound + 4.0 * se, "freq {freq} vs bound {bound}");
        // S_d <= N_d pointwise
        let path = sample_ar1_path(d, rho, 1.0, 1).unwrap();
        for &tt in &[t, t - 1.0, t - 2.0] {
            let (n_d, s_d, _) = block_exceedance_compare(&path, &layout, tt).unwrap();
            assert!(s_d <= n_d);
        }
    }

    #[test]
    fn poisson_window_rho_zero_matches_binomial_gap() {
        let (d, k) = (400usize, 2usize);
        let report =
            poisson_window_check(0.0, 1.0, d, k, 0.1, 200, 5, 4_000, 1.0, Stream::new(31))
                .unwrap();
        for row in &report.rows {
            let exact = crate::gaussian::binomial_poisson_gap(d, row.lambda / d as f64, k).unwrap();
            assert!(exact < 0.01, "exact binomial-Poisson gap {exact}");
            // model-based se floor: the Bernoulli se is 0 when no path lands
            // below the threshold, but the binomial noise is still there
            let se = row.se.max((row.hk_val * (1.0 - row.hk_val) / 4_000.0).sqrt());
            assert!(
                row.gap <= exact + 4.0 * se,
                "t={}: gap {} exact {} se {}",
                row.t,
                row.gap,
                exact,
                se
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn layout_arithmetic_fuzz(
            d in 1usize..200_000,
            m in 1usize..500,
            ell in 0usize..500,
        ) {
            let layout = BlockLayout::from_lengths(d, m, ell).unwrap();
            prop_assert_eq!(
                layout.q_d * (layout.m_d + layout.ell_d) + layout.s_d,
                layout.d
            );
            prop_assert!(layout.s_d < m + ell.max(1) || layout.q_d == 0 && layout.s_d == d);
            prop_assert_eq!(layout.main_blocks.len(), layout.q_d);
            prop_assert_eq!(layout.gaps.len(), layout.q_d);
        }

        #[test]
        fn scalar_layout_fuzz(
            d in 10.0f64..1e9,
            n in 10.0f64..1e6,
            k0 in 2usize..20,
            a_alpha in 0.05f64..3.0,
            beta in 0.05f64..1.0,
        ) {
            let p = params(d.floor(), n.floor(), k0, a_alpha, beta);
            let sc = block_scalars(&p).unwrap();
            prop_assert_eq!(sc.q_d * (sc.m_d + sc.ell_d) + sc.s_d, p.d);
            prop_assert!(sc.s_d >= 0.0);
            prop_assert!(sc.s_d < sc.m_d + sc.ell_d);
        }
    }
}
