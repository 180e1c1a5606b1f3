//! Data generation: correlation designs, Cholesky factorization, the
//! Gaussian-copula sampler with gamma marginals, and stationary AR(1) paths.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dist::{gamma_quantile, normal_cdf};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Correlation design family.
#[derive(Clone, Debug, PartialEq)]
pub enum CorrelationFamily {
    /// Design I: R = rho 11^T + (1 - rho) I, rho in [0, 1).
    EquiCorr,
    /// Design II: R_jk = rho^{|j-k|}, |rho| < 1.
    Ar1,
    /// User-supplied matrix, validated for symmetry and unit diagonal.
    Explicit,
}

/// Specification of a d x d correlation matrix.
#[derive(Clone, Debug)]
pub struct CorrelationSpec {
    pub family: CorrelationFamily,
    pub rho: f64,
    pub d: usize,
    pub explicit: Option<DMatrix<f64>>,
}

impl CorrelationSpec {
    pub fn equicorr(d: usize, rho: f64) -> Self {
        CorrelationSpec { family: CorrelationFamily::EquiCorr, rho, d, explicit: None }
    }

    pub fn ar1(d: usize, rho: f64) -> Self {
        CorrelationSpec { family: CorrelationFamily::Ar1, rho, d, explicit: None }
    }

    pub fn explicit(m: DMatrix<f64>) -> Self {
        let d = m.nrows();
        CorrelationSpec { family: CorrelationFamily::Explicit, rho: f64::NAN, d, explicit: Some(m) }
    }
}

/// Realize the correlation matrix of a [`CorrelationSpec`].
pub fn build_correlation(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    if spec.d == 0 {
        return Err(Error::Domain("dimension d must be positive"));
    }
    match spec.family {
        CorrelationFamily::EquiCorr => {
            if !(0.0..1.0).contains(&spec.rho) {
                return Err(Error::InvalidRho { rho: spec.rho, reason: "equicorrelated design needs rho in [0,1)" });
            }
            let d = spec.d;
            Ok(DMatrix::from_fn(d, d, |j, k| if j == k { 1.0 } else { spec.rho }))
        }
        CorrelationFamily::Ar1 => {
            if !(spec.rho.abs() < 1.0) {
                return Err(Error::InvalidRho { rho: spec.rho, reason: "AR(1) design needs |rho| < 1" });
            }
            let d = spec.d;
            Ok(DMatrix::from_fn(d, d, |j, k| {
                spec.rho.powi((j as i32 - k as i32).abs())
            }))
        }
        CorrelationFamily::Explicit => {
            let m = spec
                .explicit
                .as_ref()
                .ok_or(Error::InvalidExplicit("no matrix supplied"))?;
            if m.nrows() != m.ncols() || m.nrows() != spec.d {
                return Err(Error::InvalidExplicit("matrix is not d x d"));
            }
            for j in 0..spec.d {
                if m[(j, j)] != 1.0 {
                    return Err(Error::InvalidExplicit("diagonal entries must equal 1"));
                }
                for k in 0..j {
                    if m[(j, k)] != m[(k, j)] {
                        return Err(Error::InvalidExplicit("matrix is not symmetric"));
                    }
                }
            }
            Ok(m.clone())
        }
    }
}

/// Lower-triangular Cholesky factor with L L^T equal to the input.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub l: DMatrix<f64>,
}

const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Factor a symmetric positive definite matrix; fails when a pivot drops
/// below 1e-12.
pub fn cholesky(r: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::Domain("cholesky requires a square matrix"));
    }
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut diag = r[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > CHOLESKY_PIVOT_TOL) {
            return Err(Error::NonPositiveDefinite { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut v = r[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    /// y = L x, written into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.l.nrows();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.l[(i, k)] * x[k];
            }
            out[i] = acc;
        }
    }
}

/// Data-generating case of the simulation design.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    /// X_i = U_i - theta 1 with gamma(theta) marginals (theta = 1 in the study).
    Asymmetric,
    /// X_i = U_i - U_i' for two independent copula draws.
    Symmetric,
    /// X_i = Z_i exactly normal (reference switch, no copula transform).
    Gaussian,
}

/// An n x d matrix of centered observations with its provenance.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    /// Row-major storage, n * d entries.
    pub values: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub case: Case,
    pub theta: f64,
    pub seed: u64,
}

impl DataMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, case: Case, theta: f64, seed: u64) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(n * d);
        for r in rows {
            assert_eq!(r.len(), d);
            values.extend_from_slice(&r);
        }
        DataMatrix { values, n, d, case, theta, seed }
    }
}

// Stream roles inside a data draw.
const ROLE_COPULA_PRIMARY: u64 = 0;
const ROLE_COPULA_SECONDARY: u64 = 1;

fn latent_row(chol: &CholeskyFactor, stream: Stream, eps: &mut [f64], z: &mut [f64]) {
    let mut rng = stream.rng();
    for e in eps.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
    chol.apply(eps, z);
}

fn copula_transform(z: &[f64], theta: f64, out: &mut [f64]) -> Result<()> {
    for (u, &zj) in out.iter_mut().zip(z) {
        // clamp away from {0, 1}: Phi rounds to 1.0 beyond ~8.3 sigma
        let p = normal_cdf(zj).clamp(1e-300, 1.0 - 1e-16);
        *u = gamma_quantile(p, theta)?;
    }
    Ok(())
}

/// Draw n rows of the Gaussian-copula model with gamma(theta) marginals:
/// U_ij = F_theta^{-1}(Phi(Z_ij)) with Z_i ~ N(0, R).
///
/// Asymmetric case: X_i = U_i - theta 1 (population centering; theta = 1 in
/// the study). Symmetric case: X_i = U_i - U_i' for an independent copy U'.
pub fn sample_copula_gamma(
    n: usize,
    spec: &CorrelationSpec,
    theta: f64,
    case: Case,
    seed: u64,
) -> Result<DataMatrix> {
    if theta <= 0.0 {
        return Err(Error::Domain("gamma shape theta must be positive"));
    }
    if case == Case::Gaussian {
        return sample_gaussian(n, spec, seed);
    }
    let r = build_correlation(spec)?;
    let chol = cholesky(&r)?;
    let d = spec.d;
    let root = Stream::new(seed);
    let rows: Result<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut eps = vec![0.0; d];
            let mut z = vec![0.0; d];
            let mut u = vec![0.0; d];
            let row_stream = root.child(ROLE_COPULA_PRIMARY).child(i as u64);
            latent_row(&chol, row_stream, &mut eps, &mut z);
            copula_transform(&z, theta, &mut u)?;
            match case {
                Case::Asymmetric => {
                    for v in u.iter_mut() {
                        *v -= theta;
                    }
                    Ok(u)
                }
                Case::Symmetric => {
                    let mut u2 = vec![0.0; d];
                    let row_stream2 = root.child(ROLE_COPULA_SECONDARY).child(i as u64);
                    latent_row(&chol, row_stream2, &mut eps, &mut z);
                    copula_transform(&z, theta, &mut u2)?;
                    for (v, w) in u.iter_mut().zip(&u2) {
                        *v -= w;
                    }
                    Ok(u)
                }
                Case::Gaussian => unreachable!(),
            }
        })
        .collect();
    Ok(DataMatrix::from_rows(rows?, case, theta, seed))
}

/// Draw n exactly-normal rows X_i = Z_i ~ N(0, R) (reference switch).
pub fn sample_gaussian(n: usize, spec: &CorrelationSpec, seed: u64) -> Result<DataMatrix> {
    let r = build_correlation(spec)?;
    let chol = cholesky(&r)?;
    let d = spec.d;
    let root = Stream::new(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut eps = vec![0.0; d];
            let mut z = vec![0.0; d];
            let row_stream = root.child(ROLE_COPULA_PRIMARY).child(i as u64);
            latent_row(&chol, row_stream, &mut eps, &mut z);
            z
        })
        .collect();
    Ok(DataMatrix::from_rows(rows, Case::Gaussian, f64::NAN, seed))
}

/// Stationary Gaussian AR(1) path of length d:
/// Z_1 ~ N(0, sigma^2), Z_{j+1} = rho Z_j + sigma sqrt(1 - rho^2) eps_j,
/// so that Cov(Z_0, Z_h) = sigma^2 rho^h.
pub fn sample_ar1_path(d: usize, rho: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain("AR(1) path requires |rho| < 1"));
    }
    if sigma <= 0.0 {
        return Err(Error::Domain("AR(1) path requires sigma > 0"));
    }
    let mut rng = Stream::new(seed).rng();
    let mut z = Vec::with_capacity(d);
    if d == 0 {
        return Ok(z);
    }
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut cur: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
    z.push(cur);
    for _ in 1..d {
        cur = rho * cur + innov * rng.sample::<f64, _>(StandardNormal);
        z.push(cur);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn frobenius_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        ((a - b).norm()) / b.norm()
    }

    #[test]
    fn equicorr_rho_zero_is_identity() {
        let r = build_correlation(&CorrelationSpec::equicorr(3, 0.0)).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3));
        let r = build_correlation(&CorrelationSpec::ar1(3, 0.0)).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3));
    }

    #[test]
    fn equicorr_two_by_two() {
        let r = build_correlation(&CorrelationSpec::equicorr(2, 0.8)).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]));
    }

    #[test]
    fn ar1_three_by_three() {
        let r = build_correlation(&CorrelationSpec::ar1(3, 0.5)).unwrap();
        let expect =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert!(frobenius_rel_err(&r, &expect) < 1e-15);
    }

    #[test]
    fn invalid_rho_rejected() {
        assert!(matches!(
            build_correlation(&CorrelationSpec::equicorr(4, 1.0)),
            Err(Error::InvalidRho { .. })
        ));
        assert!(matches!(
            build_correlation(&CorrelationSpec::equicorr(4, -0.1)),
            Err(Error::InvalidRho { .. })
        ));
        assert!(matches!(
            build_correlation(&CorrelationSpec::ar1(4, -1.0)),
            Err(Error::InvalidRho { .. })
        ));
    }

    #[test]
    fn explicit_validation() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.9]);
        assert!(build_correlation(&CorrelationSpec::explicit(bad_diag)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(build_correlation(&CorrelationSpec::explicit(asym)).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        assert!(build_correlation(&CorrelationSpec::explicit(ok)).is_ok());
    }

    #[test]
    fn cholesky_identity_and_known_factor() {
        let id = DMatrix::<f64>::identity(4, 4);
        let c = cholesky(&id).unwrap();
        assert!(frobenius_rel_err(&c.l, &id) < 1e-15);

        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let c = cholesky(&r).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.8, 0.6]);
        assert!(frobenius_rel_err(&c.l, &expect) < 1e-14);
    }

    #[test]
    fn cholesky_roundtrip_ar1() {
        let r = build_correlation(&CorrelationSpec::ar1(3, 0.5)).unwrap();
        let c = cholesky(&r).unwrap();
        let back = &c.l * c.l.transpose();
        assert!(frobenius_rel_err(&back, &r) < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&m), Err(Error::NonPositiveDefinite { .. })));
    }

    #[test]
    fn correlation_invariants_roundtrip() {
        for spec in [
            CorrelationSpec::equicorr(17, 0.35),
            CorrelationSpec::ar1(17, -0.6),
            CorrelationSpec::ar1(17, 0.9),
        ] {
            let r = build_correlation(&spec).unwrap();
            for j in 0..17 {
                assert_eq!(r[(j, j)], 1.0);
                for k in 0..17 {
                    assert_eq!(r[(j, k)], r[(k, j)]);
                }
            }
            let c = cholesky(&r).unwrap();
            let back = &c.l * c.l.transpose();
            assert!(frobenius_rel_err(&back, &r) < 1e-10);
            for j in 0..17 {
                assert!(c.l[(j, j)] > 0.0);
            }
        }
    }

    #[test]
    fn copula_moments_asymmetric() {
        // Gamma(1) has mean 1 and variance 1; columns of X should have mean
        // ~0 and variance ~1 within a 4-sigma Monte Carlo band.
        let n = 50_000;
        let x = sample_copula_gamma(n, &CorrelationSpec::equicorr(3, 0.0), 1.0, Case::Asymmetric, 99)
            .unwrap();
        for j in 0..3 {
            let mean: f64 = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
            let var: f64 = (0..n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
            // se(mean) = 1/sqrt(n); se(var) ~ sqrt((kurt-1)/n) with kurt = 9 for exp
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 4.0 * (8.0f64 / n as f64).sqrt(), "var {var}");
        }
    }

    #[test]
    fn copula_symmetric_kills_skewness() {
        let n = 50_000;
        let x =
            sample_copula_gamma(n, &CorrelationSpec::ar1(3, 0.4), 0.5, Case::Symmetric, 1234)
                .unwrap();
        for j in 0..3 {
            let mean: f64 = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
            let m2: f64 = (0..n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
            let m3: f64 = (0..n).map(|i| (x.row(i)[j] - mean).powi(3)).sum::<f64>() / n as f64;
            let m4: f64 = (0..n).map(|i| (x.row(i)[j] - mean).powi(4)).sum::<f64>() / n as f64;
            let m6: f64 = (0..n).map(|i| (x.row(i)[j] - mean).powi(6)).sum::<f64>() / n as f64;
            let skew = m3 / m2.powf(1.5);
            // asymptotic variance of sample skewness for a symmetric law:
            // (m6/m2^3 - 6 m4/m2^2 + 9) / n, from the sample moments
            let var_skew = (m6 / m2.powi(3) - 6.0 * m4 / m2.powi(2) + 9.0) / n as f64;
            assert!(skew.abs() < 4.0 * var_skew.sqrt(), "skew {skew}");
        }
    }

    #[test]
    fn copula_marginals_ks_test() {
        // KS statistic of U_{.j} against Gamma(theta) below the 1% critical
        // value 1.63/sqrt(n) at n = 10^4, for a fixed column subset.
        let n = 10_000;
        let theta = 0.5;
        let spec = CorrelationSpec::equicorr(5, 0.3);
        let x = sample_copula_gamma(n, &spec, theta, Case::Asymmetric, 4321).unwrap();
        for &j in &[0usize, 2, 4] {
            let mut u: Vec<f64> = (0..n).map(|i| x.row(i)[j] + theta).collect();
            u.sort_by(f64::total_cmp);
            let mut ks: f64 = 0.0;
            for (i, &v) in u.iter().enumerate() {
                let f = crate::dist::reg_gamma_lower(theta, v.max(0.0)).unwrap();
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                ks = ks.max((f - lo).abs()).max((f - hi).abs());
            }
            assert!(ks < 1.63 / (n as f64).sqrt(), "KS = {ks} at column {j}");
        }
    }

    #[test]
    fn copula_latent_correlation_matches_spec() {
        // Correlation of the copula-transformed columns is close to R for the
        // latent pair; we check the latent Z by inverting the transform.
        let n = 10_000;
        let rho = 0.6;
        let spec = CorrelationSpec::equicorr(2, rho);
        let x = sample_copula_gamma(n, &spec, 1.0, Case::Asymmetric, 777).unwrap();
        let mut z = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in 0..2 {
                let u = x.row(i)[j] + 1.0;
                let p = crate::dist::reg_gamma_lower(1.0, u).unwrap();
                z[i][j] = crate::dist::normal_quantile(p.clamp(1e-300, 1.0 - 1e-16)).unwrap();
            }
        }
        let mean0: f64 = z.iter().map(|r| r[0]).sum::<f64>() / n as f64;
        let mean1: f64 = z.iter().map(|r| r[1]).sum::<f64>() / n as f64;
        let mut c00 = 0.0;
        let mut c11 = 0.0;
        let mut c01 = 0.0;
        for r in &z {
            c00 += (r[0] - mean0).powi(2);
            c11 += (r[1] - mean1).powi(2);
            c01 += (r[0] - mean0) * (r[1] - mean1);
        }
        let corr = c01 / (c00 * c11).sqrt();
        let se = (1.0 - rho * rho) / (n as f64).sqrt();
        assert!((corr - rho).abs() < 4.0 * se, "corr {corr}");
    }

    #[test]
    fn copula_seed_determinism() {
        let spec = CorrelationSpec::ar1(4, 0.2);
        let a = sample_copula_gamma(100, &spec, 0.5, Case::Symmetric, 5).unwrap();
        let b = sample_copula_gamma(100, &spec, 0.5, Case::Symmetric, 5).unwrap();
        assert_eq!(a.values, b.values);
        let c = sample_copula_gamma(100, &spec, 0.5, Case::Symmetric, 6).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn ar1_path_lag_correlations() {
        let d = 1_000_000;
        let rho = 0.5;
        let z = sample_ar1_path(d, rho, 1.0, 2024).unwrap();
        let mean = z.iter().sum::<f64>() / d as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        assert!((var - 1.0).abs() < 0.02);
        for h in 1..=5usize {
            let mut acc = 0.0;
            for i in 0..(d - h) {
                acc += (z[i] - mean) * (z[i + h] - mean);
            }
            let corr = acc / ((d - h) as f64) / var;
            let expect = rho.powi(h as i32);
            // se of lag-h autocorrelation is O(1/sqrt(d))
            assert!(
                (corr - expect).abs() < 5.0 / (d as f64).sqrt(),
                "lag {h}: {corr} vs {expect}"
            );
        }
    }

    #[test]
    fn ar1_path_rho_zero_is_iid() {
        let d = 100_000;
        let z = sample_ar1_path(d, 0.0, 2.0, 7).unwrap();
        let mean = z.iter().sum::<f64>() / d as f64;
        let mut acc = 0.0;
        let mut var = 0.0;
        for i in 0..(d - 1) {
            acc += (z[i] - mean) * (z[i + 1] - mean);
            var += (z[i] - mean).powi(2);
        }
        let corr = acc / var;
        assert!(corr.abs() < 4.0 / (d as f64).sqrt());
    }

    #[test]
    fn ar1_domain_errors() {
        assert!(sample_ar1_path(10, 1.0, 1.0, 0).is_err());
        assert!(sample_ar1_path(10, 0.3, 0.0, 0).is_err());
    }

    #[test]
    fn stream_role_separation() {
        // primary and secondary copula draws must differ
        let root = Stream::new(11);
        assert_ne!(
            root.child(ROLE_COPULA_PRIMARY).child(0).key(),
            root.child(ROLE_COPULA_SECONDARY).child(0).key()
        );
    }
}
