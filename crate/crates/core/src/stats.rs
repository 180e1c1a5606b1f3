//! The statistic pipeline: normalized sums, descending order statistics,
//! exceedance counts, empirical factorial moments, and generalized-inverse
//! empirical quantiles.

use crate::dist::choose_f;
use crate::error::{Error, Result};
use crate::sampling::DataMatrix;

/// The normalized sum S_n = n^{-1/2} sum_i X_i.
#[derive(Clone, Debug)]
pub struct StatVector {
    pub s: Vec<f64>,
    pub n: usize,
}

impl StatVector {
    pub fn d(&self) -> usize {
        self.s.len()
    }
}

/// Compute S_n from a data matrix.
pub fn normalized_sum(x: &DataMatrix) -> StatVector {
    let mut s = vec![0.0; x.d];
    for i in 0..x.n {
        let row = x.row(i);
        for (acc, &v) in s.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let scale = 1.0 / (x.n as f64).sqrt();
    for v in s.iter_mut() {
        *v *= scale;
    }
    StatVector { s, n: x.n }
}

/// k-th largest element of `v` (k = 1 is the maximum). Ties count with
/// multiplicity; selection, not a full sort.
pub fn kth_order_stat(v: &[f64], k: usize) -> Result<f64> {
    let mut buf = v.to_vec();
    kth_order_stat_mut(&mut buf, k)
}

/// In-place variant of [`kth_order_stat`] for hot loops; scrambles `v`.
pub fn kth_order_stat_mut(v: &mut [f64], k: usize) -> Result<f64> {
    let d = v.len();
    if k == 0 || k > d {
        return Err(Error::IndexError { k, d });
    }
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

/// Number of coordinates strictly above t.
pub fn exceedance_count(v: &[f64], t: f64) -> usize {
    v.iter().filter(|&&x| x > t).count()
}

/// Sample mean of C(N, s) over the supplied exceedance counts; C(N, s) = 0
/// when N < s.
pub fn factorial_moment_estimate(counts: &[u64], s: u64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().map(|&n| choose_f(n, s)).sum::<f64>() / counts.len() as f64
}

/// Generalized inverse of the ECDF: inf{t : F_hat(t) >= p}, i.e. the
/// ceil(p B)-th ascending order statistic. Accepts p in (0, 1].
pub fn ecdf_quantile(values: &[f64], p: f64) -> Result<f64> {
    let mut buf = values.to_vec();
    buf.sort_by(f64::total_cmp);
    ecdf_quantile_sorted(&buf, p)
}

/// [`ecdf_quantile`] on an already ascending-sorted slice.
pub fn ecdf_quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    let b = sorted.len();
    if b == 0 {
        return Err(Error::EmptyInput);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain("ecdf_quantile requires p in (0,1]"));
    }
    Ok(sorted[ecdf_index(b, p)])
}

/// 0-based index of the ceil(p B)-th ascending order statistic, with a
/// round-off guard so p B values that are integers up to f64 noise are not
/// bumped to the next rank.
pub(crate) fn ecdf_index(b: usize, p: f64) -> usize {
    let t = p * b as f64;
    let r = t.round();
    let idx = if (t - r).abs() <= 1e-9 * r.max(1.0) { r } else { t.ceil() };
    (idx as usize).clamp(1, b) - 1
}
