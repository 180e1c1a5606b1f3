//! Bootstrap engines: multiplier laws with exact moment structure, the
//! single-level wild and empirical bootstraps, the prepivoted double wild
//! bootstrap, critical values, and the deterministic-array condition
//! validator.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sampling::DataMatrix;
use crate::stats::{ecdf_quantile, ecdf_quantile_sorted, kth_order_stat_mut};

/// Multiplier law of a wild bootstrap level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MultiplierLaw {
    Gaussian,
    /// Two-point law: (1+sqrt5)/2 w.p. (sqrt5-1)/(2 sqrt5), else -(sqrt5-1)/2.
    Mammen,
    Rademacher,
    /// Standardized Beta(alpha_nu, beta_nu) with
    /// c_nu = nu^2 + 20 nu + 20, alpha_nu = (nu/2)(1 - (nu+2)/sqrt(c_nu)),
    /// beta_nu = (nu/2)(1 + (nu+2)/sqrt(c_nu)); E w = 0, E w^2 = E w^3 = 1.
    Beta { nu: f64 },
}

/// Shape parameters and standardization constants of the Beta multiplier.
#[derive(Clone, Copy, Debug)]
pub struct BetaParams {
    pub c_nu: f64,
    pub alpha_nu: f64,
    pub beta_nu: f64,
    pub mean: f64,
    pub sd: f64,
}

pub fn beta_params(nu: f64) -> Result<BetaParams> {
    if nu <= 0.0 {
        return Err(Error::Domain("beta multiplier requires nu > 0"));
    }
    let c_nu = nu * nu + 20.0 * nu + 20.0;
    let t = (nu + 2.0) / c_nu.sqrt();
    if t >= 1.0 {
        return Err(Error::Domain("beta multiplier parameters degenerate"));
    }
    let alpha_nu = 0.5 * nu * (1.0 - t);
    let beta_nu = 0.5 * nu * (1.0 + t);
    let mean = alpha_nu / nu;
    let var = alpha_nu * beta_nu / (nu * nu * (nu + 1.0));
    Ok(BetaParams { c_nu, alpha_nu, beta_nu, mean, sd: var.sqrt() })
}

const MAMMEN_HI: f64 = 1.618_033_988_749_895; // (1+sqrt5)/2
const MAMMEN_LO: f64 = -0.618_033_988_749_895; // -(sqrt5-1)/2
const MAMMEN_P_HI: f64 = 0.276_393_202_250_021; // (sqrt5-1)/(2 sqrt5)

impl MultiplierLaw {
    /// Analytic third moment E w^3 (the gamma of the coverage expansion).
    pub fn gamma(&self) -> f64 {
        match self {
            MultiplierLaw::Gaussian | MultiplierLaw::Rademacher => 0.0,
            MultiplierLaw::Mammen | MultiplierLaw::Beta { .. } => 1.0,
        }
    }

    /// Draw one multiplier.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            MultiplierLaw::Gaussian => rng.sample(StandardNormal),
            MultiplierLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MultiplierLaw::Mammen => {
                if rng.gen::<f64>() < MAMMEN_P_HI {
                    MAMMEN_HI
                } else {
                    MAMMEN_LO
                }
            }
            MultiplierLaw::Beta { nu } => {
                let p = beta_params(nu).expect("validated at construction");
                (sample_beta_log_space(p.alpha_nu, p.beta_nu, rng) - p.mean) / p.sd
            }
        }
    }

    /// Fill a slice with i.i.d. multipliers.
    pub fn fill<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        // hoist the Beta parameter computation out of the loop
        if let MultiplierLaw::Beta { nu } = *self {
            let p = beta_params(nu).expect("validated at construction");
            for w in out.iter_mut() {
                *w = (sample_beta_log_space(p.alpha_nu, p.beta_nu, rng) - p.mean) / p.sd;
            }
        } else {
            for w in out.iter_mut() {
                *w = self.sample(rng);
            }
        }
    }
}

/// Beta(a, b) sampler via Johnk's ratio computed in log space, stable for
/// the very small shapes the nu = 0.1 multiplier needs.
fn sample_beta_log_space<R: Rng>(a: f64, b: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        if u <= 0.0 || v <= 0.0 {
            continue;
        }
        let la = u.ln() / a;
        let lb = v.ln() / b;
        let m = la.max(lb);
        // log(U^{1/a} + V^{1/b})
        let lsum = m + ((la - m).exp() + (lb - m).exp()).ln();
        if lsum <= 0.0 {
            return 1.0 / (1.0 + (lb - la).exp());
        }
    }
}

/// How the replicates of a [`BootstrapDraws`] were generated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResamplingScheme {
    Wild(MultiplierLaw),
    Empirical,
}

/// Sorted bootstrap replicates of T*_{n,(k)} plus their provenance.
#[derive(Clone, Debug)]
pub struct BootstrapDraws {
    /// Ascending replicate statistics, length B.
    pub stats: Vec<f64>,
    pub k: usize,
    pub scheme: ResamplingScheme,
    /// Key of the stream the replicate substreams were derived from.
    pub stream_key: u64,
}

impl BootstrapDraws {
    pub fn b(&self) -> usize {
        self.stats.len()
    }
}

/// Bootstrap critical value c_hat_{p,k}: generalized inverse of the
/// replicate ECDF at p.
pub fn critical_value(draws: &BootstrapDraws, p: f64) -> Result<f64> {
    ecdf_quantile_sorted(&draws.stats, p)
}

/// Rows of `x` centered at the column means.
pub(crate) fn centered_rows(x: &DataMatrix) -> Vec<f64> {
    let (n, d) = (x.n, x.d);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let row = x.row(i);
        let dst = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            dst[j] = row[j] - mean[j];
        }
    }
    out
}

/// s_j = scale * sum_i w_i m[i, j], accumulated row-wise.
#[inline]
fn weighted_colsum(m: &[f64], n: usize, d: usize, w: &[f64], scale: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        let wi = w[i];
        let row = &m[i * d..(i + 1) * d];
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += wi * v;
        }
    }
    for v in out.iter_mut() {
        *v *= scale;
    }
}

// Stream roles inside one bootstrap replicate of the double bootstrap.
const ROLE_OUTER_MULTIPLIER: u64 = 0;
const ROLE_INNER: u64 = 1;

/// Wild bootstrap: B conditional replicates of the k-th largest coordinate
/// of S*_n = n^{-1/2} sum_i w_i (X_i - X_bar), returned sorted ascending.
///
/// Replicate b draws its multipliers from `stream.child(b)`, so the
/// replicate set is independent of the parallel schedule.
pub fn wild_bootstrap_draws(
    x: &DataMatrix,
    law: MultiplierLaw,
    b: usize,
    k: usize,
    stream: Stream,
) -> Result<BootstrapDraws> {
    if k == 0 || k > x.d {
        return Err(Error::IndexError { k, d: x.d });
    }
    if let MultiplierLaw::Beta { nu } = law {
        beta_params(nu)?;
    }
    let xc = centered_rows(x);
    let (n, d) = (x.n, x.d);
    let scale = 1.0 / (n as f64).sqrt();
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.child(rep as u64).rng();
            let mut w = vec![0.0; n];
            law.fill(&mut rng, &mut w);
            let mut s = vec![0.0; d];
            weighted_colsum(&xc, n, d, &w, scale, &mut s);
            kth_order_stat_mut(&mut s, k).expect("k validated")
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(BootstrapDraws { stats, k, scheme: ResamplingScheme::Wild(law), stream_key: stream.key() })
}

/// Empirical bootstrap: each replicate resamples n rows with replacement and
/// computes the k-th largest coordinate of S* = n^{-1/2} sum_i (X*_i - X_bar),
/// centered at the original sample mean.
pub fn empirical_bootstrap_draws(
    x: &DataMatrix,
    b: usize,
    k: usize,
    stream: Stream,
) -> Result<BootstrapDraws> {
    if k == 0 || k > x.d {
        return Err(Error::IndexError { k, d: x.d });
    }
    let xc = centered_rows(x);
    let (n, d) = (x.n, x.d);
    let scale = 1.0 / (n as f64).sqrt();
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.child(rep as u64).rng();
            let mut s = vec![0.0; d];
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                let row = &xc[i * d..(i + 1) * d];
                for (acc, &v) in s.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            for v in s.iter_mut() {
                *v *= scale;
            }
            kth_order_stat_mut(&mut s, k).expect("k validated")
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(BootstrapDraws { stats, k, scheme: ResamplingScheme::Empirical, stream_key: stream.key() })
}

/// Result of the prepivoted double wild bootstrap.
#[derive(Clone, Debug)]
pub struct DoubleBootOutcome {
    /// Calibrated level beta_hat_{alpha,k} in (0, 1].
    pub beta_hat: f64,
    /// c_hat_{beta_hat, k}; an element of the outer replicate multiset.
    pub critical: f64,
    /// Prepivoted values u_b = F_hat*(T*_b), one per outer replicate.
    pub u_values: Vec<f64>,
    /// Outer-level replicates (sorted).
    pub outer: BootstrapDraws,
}

/// Prepivoted double wild bootstrap.
///
/// Outer replicate b: X*_i = w_i (X_i - X_bar) with w from
/// `stream.child(b).child(0)`; inner replicate j recenters the X*_i at their
/// mean and draws v from `stream.child(b).child(1).child(j)`. The prepivoted
/// value is u_b = B2^{-1} #{T** <= T*_b}; beta_hat is the generalized inverse
/// of the u-sample ECDF at 1 - alpha and the critical value is
/// c_hat_{beta_hat, k} of the outer replicates. The test rejects when
/// T_{n,(k)} >= critical.
#[allow(clippy::too_many_arguments)]
pub fn double_bootstrap(
    x: &DataMatrix,
    law1: MultiplierLaw,
    law2: MultiplierLaw,
    b1: usize,
    b2: usize,
    alpha: f64,
    k: usize,
    stream: Stream,
) -> Result<DoubleBootOutcome> {
    if k == 0 || k > x.d {
        return Err(Error::IndexError { k, d: x.d });
    }
    if b1 == 0 || b2 == 0 {
        return Err(Error::Domain("double bootstrap requires B1 >= 1 and B2 >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("double bootstrap requires alpha in (0,1)"));
    }
    if law2.gamma() != 1.0 {
        return Err(Error::InvalidSecondLevelLaw(law2.gamma()));
    }
    if let MultiplierLaw::Beta { nu } = law2 {
        beta_params(nu)?;
    }
    let xc = centered_rows(x);
    let (n, d) = (x.n, x.d);
    let scale = 1.0 / (n as f64).sqrt();
    let per_rep: Vec<(f64, f64)> = (0..b1)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = stream.child(rep as u64);
            let mut rng_w = rep_stream.child(ROLE_OUTER_MULTIPLIER).rng();
            let mut w = vec![0.0; n];
            law1.fill(&mut rng_w, &mut w);

            // X*_i = w_i (X_i - X_bar), then recenter at X_bar*
            let mut xstar = vec![0.0; n * d];
            for i in 0..n {
                let wi = w[i];
                let src = &xc[i * d..(i + 1) * d];
                let dst = &mut xstar[i * d..(i + 1) * d];
                for j in 0..d {
                    dst[j] = wi * src[j];
                }
            }
            let mut s = vec![0.0; d];
            for i in 0..n {
                let row = &xstar[i * d..(i + 1) * d];
                for (acc, &v) in s.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let mut mean_star = vec![0.0; d];
            for (m, &tot) in mean_star.iter_mut().zip(&s) {
                *m = tot / n as f64;
            }
            for v in s.iter_mut() {
                *v *= scale;
            }
            let t_outer = kth_order_stat_mut(&mut s, k).expect("k validated");
            for i in 0..n {
                let row = &mut xstar[i * d..(i + 1) * d];
                for j in 0..d {
                    row[j] -= mean_star[j];
                }
            }

            let inner_stream = rep_stream.child(ROLE_INNER);
            let mut v = vec![0.0; n];
            let mut s2 = vec![0.0; d];
            let mut count = 0usize;
            for j in 0..b2 {
                let mut rng_v = inner_stream.child(j as u64).rng();
                law2.fill(&mut rng_v, &mut v);
                weighted_colsum(&xstar, n, d, &v, scale, &mut s2);
                let t_inner = kth_order_stat_mut(&mut s2, k).expect("k validated");
                if t_inner <= t_outer {
                    count += 1;
                }
            }
            (t_outer, count as f64 / b2 as f64)
        })
        .collect();

    let u_values: Vec<f64> = per_rep.iter().map(|&(_, u)| u).collect();
    let mut stats: Vec<f64> = per_rep.iter().map(|&(t, _)| t).collect();
    stats.sort_by(f64::total_cmp);
    let outer = BootstrapDraws {
        stats,
        k,
        scheme: ResamplingScheme::Wild(law1),
        stream_key: stream.key(),
    };
    let beta_hat = ecdf_quantile(&u_values, 1.0 - alpha)?;
    let critical = ecdf_quantile_sorted(&outer.stats, beta_hat)?;
    Ok(DoubleBootOutcome { beta_hat, critical, u_values, outer })
}

/// Report of the deterministic-array conditions for the second bootstrap
/// level: sup-norm of the rows, minimum projected Gram eigenvalue against
/// sigma_star^2 / 2, and the max-norm deviation of the projected Gram
/// matrices from Sigma_II. Eigenvalues are exact (symmetric eigensolver);
/// Gershgorin lower bounds are reported alongside.
#[derive(Clone, Debug)]
pub struct ArrayConditionReport {
    /// max_i ||a_i||_inf.
    pub max_sup_norm: f64,
    /// Smallest exact Gram eigenvalue per subset size s.
    pub min_eig_by_size: BTreeMap<usize, f64>,
    /// Smallest Gershgorin lower bound per subset size s.
    pub min_gershgorin_by_size: BTreeMap<usize, f64>,
    /// max over sampled I of ||(1/n) sum P_I a_i (P_I a_i)^T - Sigma_II||_max.
    pub max_cov_dev: f64,
    /// Reference scale log^2(dn) for the sup-norm condition.
    pub sup_norm_scale: f64,
    /// Reference scale log^2(dn) sqrt(log(dn)/n) for the deviation condition.
    pub cov_dev_scale: f64,
    pub subsets_checked: usize,
    /// min eigenvalue >= sigma_star^2 / 2 over all sampled subsets.
    pub cond2_pass: bool,
    /// max_sup_norm within the reference scale (diagnostic, not a proof).
    pub cond1_pass: bool,
    /// max_cov_dev within the reference scale (diagnostic, not a proof).
    pub cond3_pass: bool,
}

/// Check the deterministic-array conditions on an n x d array (row-major).
///
/// Exhausting all subsets I is infeasible, so all contiguous windows plus
/// `subset_budget` random subsets are checked per size s <= min(k0, d).
#[allow(clippy::too_many_arguments)]
pub fn validate_array_conditions(
    array: &[f64],
    n: usize,
    d: usize,
    sigma: &DMatrix<f64>,
    k0: usize,
    sigma_star: f64,
    subset_budget: usize,
    stream: Stream,
) -> ArrayConditionReport {
    assert_eq!(array.len(), n * d, "array must be n x d row-major");
    assert_eq!(sigma.nrows(), d);
    assert_eq!(sigma.ncols(), d);
    let max_sup_norm = array.iter().fold(0.0f64, |m, &v| m.max(v.abs()));

    let smax = k0.max(1).min(d);
    let mut rng = stream.rng();
    let mut min_eig_by_size = BTreeMap::new();
    let mut min_gersh_by_size = BTreeMap::new();
    let mut max_cov_dev = 0.0f64;
    let mut subsets_checked = 0usize;

    for s in 1..=smax {
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        // contiguous windows
        let windows = d.saturating_sub(s) + 1;
        for start in 0..windows.min(subset_budget.max(1)) {
            subsets.push((start..start + s).collect());
        }
        // random subsets
        for _ in 0..subset_budget {
            let mut idx: Vec<usize> = Vec::with_capacity(s);
            while idx.len() < s {
                let j = rng.gen_range(0..d);
                if !idx.contains(&j) {
                    idx.push(j);
                }
            }
            idx.sort_unstable();
            subsets.push(idx);
        }

        let mut min_eig = f64::INFINITY;
        let mut min_gersh = f64::INFINITY;
        for idx in &subsets {
            let mut gram = DMatrix::<f64>::zeros(s, s);
            for i in 0..n {
                let row = &array[i * d..(i + 1) * d];
                for (a, &ja) in idx.iter().enumerate() {
                    let va = row[ja];
                    for (b, &jb) in idx.iter().enumerate().skip(a) {
                        gram[(a, b)] += va * row[jb];
                    }
                }
            }
            for a in 0..s {
                for b in a..s {
                    let v = gram[(a, b)] / n as f64;
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
            }
            for (a, &ja) in idx.iter().enumerate() {
                for (b, &jb) in idx.iter().enumerate() {
                    let dev = (gram[(a, b)] - sigma[(ja, jb)]).abs();
                    max_cov_dev = max_cov_dev.max(dev);
                }
            }
            // Gershgorin lower bound
            for a in 0..s {
                let radius: f64 =
                    (0..s).filter(|&b| b != a).map(|b| gram[(a, b)].abs()).sum();
                min_gersh = min_gersh.min(gram[(a, a)] - radius);
            }
            let eig = SymmetricEigen::new(gram);
            let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            min_eig = min_eig.min(lam_min);
            subsets_checked += 1;
        }
        min_eig_by_size.insert(s, min_eig);
        min_gersh_by_size.insert(s, min_gersh);
    }

    let ldn = ((d as f64) * (n as f64)).ln();
    let sup_norm_scale = ldn * ldn;
    let cov_dev_scale = ldn * ldn * (ldn / n as f64).sqrt();
    let min_eig_overall =
        min_eig_by_size.values().cloned().fold(f64::INFINITY, f64::min);
    ArrayConditionReport {
        max_sup_norm,
        min_eig_by_size,
        min_gershgorin_by_size: min_gersh_by_size,
        max_cov_dev,
        sup_norm_scale,
        cov_dev_scale,
        subsets_checked,
        cond2_pass: min_eig_overall >= 0.5 * sigma_star * sigma_star,
        cond1_pass: max_sup_norm <= sup_norm_scale,
        cond3_pass: max_cov_dev <= cov_dev_scale,
    }
}
