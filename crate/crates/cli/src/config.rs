//! Declarative experiment configuration: JSON sweeps expanded into cells,
//! with CLI flag overrides applied on top.

use serde::{Deserialize, Serialize};

use kboot::bootstrap::MultiplierLaw;
use kboot::sampling::{Case, CorrelationSpec};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Design {
    I,
    II,
}

impl Design {
    pub fn correlation_spec(&self, d: usize, rho: f64) -> CorrelationSpec {
        match self {
            Design::I => CorrelationSpec::equicorr(d, rho),
            Design::II => CorrelationSpec::ar1(d, rho),
        }
    }
}

impl std::str::FromStr for Design {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "I" | "i" | "1" => Ok(Design::I),
            "II" | "ii" | "2" => Ok(Design::II),
            other => Err(format!("unknown design '{other}' (expected I or II)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    Asymmetric,
    Symmetric,
    /// Exact-normal reference switch: X_i = Z_i, no copula transform.
    Gaussian,
}

impl CaseName {
    pub fn to_case(self) -> Case {
        match self {
            CaseName::Asymmetric => Case::Asymmetric,
            CaseName::Symmetric => Case::Symmetric,
            CaseName::Gaussian => Case::Gaussian,
        }
    }

    /// Study default for the gamma shape: theta = 1 (asymmetric), 1/2
    /// (symmetric); unused for the gaussian switch.
    pub fn default_theta(self) -> f64 {
        match self {
            CaseName::Asymmetric => 1.0,
            CaseName::Symmetric => 0.5,
            CaseName::Gaussian => f64::NAN,
        }
    }
}

impl std::str::FromStr for CaseName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "asymmetric" => Ok(CaseName::Asymmetric),
            "symmetric" => Ok(CaseName::Symmetric),
            "gaussian" => Ok(CaseName::Gaussian),
            other => Err(format!(
                "unknown case '{other}' (expected asymmetric, symmetric, or gaussian)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    EB,
    GB,
    MB,
    RB,
    BB,
    DB,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::EB, Method::GB, Method::MB, Method::RB, Method::BB, Method::DB];

    /// Stable stream-role id, independent of the configured method subset.
    pub fn stream_role(self) -> u64 {
        match self {
            Method::EB => 1,
            Method::GB => 2,
            Method::MB => 3,
            Method::RB => 4,
            Method::BB => 5,
            Method::DB => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::EB => "EB",
            Method::GB => "GB",
            Method::MB => "MB",
            Method::RB => "RB",
            Method::BB => "BB",
            Method::DB => "DB",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "EB" => Ok(Method::EB),
            "GB" => Ok(Method::GB),
            "MB" => Ok(Method::MB),
            "RB" => Ok(Method::RB),
            "BB" => Ok(Method::BB),
            "DB" => Ok(Method::DB),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierName {
    Gaussian,
    Mammen,
    Rademacher,
    Beta,
}

impl MultiplierName {
    pub fn to_law(self, beta_nu: f64) -> MultiplierLaw {
        match self {
            MultiplierName::Gaussian => MultiplierLaw::Gaussian,
            MultiplierName::Mammen => MultiplierLaw::Mammen,
            MultiplierName::Rademacher => MultiplierLaw::Rademacher,
            MultiplierName::Beta => MultiplierLaw::Beta { nu: beta_nu },
        }
    }
}

fn default_beta_nu() -> f64 {
    0.1
}
fn default_db_law1() -> MultiplierName {
    // the paper leaves the DB levels unstated; documented default, see README
    MultiplierName::Gaussian
}
fn default_db_law2() -> MultiplierName {
    MultiplierName::Beta
}
fn default_checkpoint_every() -> usize {
    256
}

/// One experiment cell: a single (design, case, n, d, rho, k) point with its
/// methods and Monte Carlo budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: Design,
    pub rho: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub case: CaseName,
    /// Gamma shape; NaN for the gaussian switch.
    pub theta: f64,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub b1: usize,
    pub b2: usize,
    pub reps: usize,
    pub master_seed: u64,
    /// 0 = rayon default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_beta_nu")]
    pub beta_nu: f64,
    #[serde(default = "default_db_law1")]
    pub db_law1: MultiplierName,
    #[serde(default = "default_db_law2")]
    pub db_law2: MultiplierName,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |field: &str, msg: String| {
            Err(HarnessError::Config(format!("{field}: {msg}")))
        };
        match self.design {
            Design::I => {
                if !(0.0..1.0).contains(&self.rho) {
                    return err("rho", format!("design I needs rho in [0,1), got {}", self.rho));
                }
            }
            Design::II => {
                if !(self.rho.abs() < 1.0) {
                    return err("rho", format!("design II needs |rho| < 1, got {}", self.rho));
                }
            }
        }
        if self.n == 0 {
            return err("n", "must be positive".into());
        }
        if self.d == 0 {
            return err("d", "must be positive".into());
        }
        if self.k == 0 || self.k > self.d {
            return err("k", format!("needs 1 <= k <= d = {}, got {}", self.d, self.k));
        }
        if self.case != CaseName::Gaussian && !(self.theta > 0.0) {
            return err("theta", format!("must be positive, got {}", self.theta));
        }
        if self.methods.is_empty() {
            return err("methods", "at least one method required".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha", format!("must lie in (0,1), got {}", self.alpha));
        }
        if self.b1 == 0 {
            return err("b1", "must be at least 1".into());
        }
        if self.methods.contains(&Method::DB) {
            if self.b2 == 0 {
                return err("b2", "DB requires b2 >= 1".into());
            }
            let law2 = self.db_law2.to_law(self.beta_nu);
            if law2.gamma() != 1.0 {
                return err("db_law2", "second-level law must have E[v^3] = 1".into());
            }
        }
        if self.reps == 0 {
            return err("reps", "must be at least 1".into());
        }
        if !(self.beta_nu > 0.0) {
            return err("beta_nu", format!("must be positive, got {}", self.beta_nu));
        }
        if self.checkpoint_every == 0 {
            return err("checkpoint_every", "must be at least 1".into());
        }
        Ok(())
    }

    /// Stable identifier of the cell for stream derivation, checkpoint keys,
    /// and table sorting.
    pub fn cell_key(&self) -> String {
        format!(
            "design={:?};case={:?};n={};d={};rho={};k={};alpha={};b1={};b2={};theta={};nu={};law1={:?};law2={:?}",
            self.design,
            self.case,
            self.n,
            self.d,
            bits(self.rho),
            self.k,
            bits(self.alpha),
            self.b1,
            self.b2,
            bits(self.theta),
            bits(self.beta_nu),
            self.db_law1,
            self.db_law2,
        )
    }
}

fn bits(x: f64) -> u64 {
    x.to_bits()
}

/// Sweep document: the JSON config format. Cross-products over designs,
/// rhos, ns, ks, and cases expand into [`ExperimentConfig`] cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub designs: Vec<Design>,
    pub rhos: Vec<f64>,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub cases: Vec<CaseName>,
    pub d: usize,
    /// None: per-case study default (1 asymmetric, 1/2 symmetric).
    #[serde(default)]
    pub theta: Option<f64>,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub b1: usize,
    #[serde(default)]
    pub b2: usize,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_beta_nu")]
    pub beta_nu: f64,
    #[serde(default = "default_db_law1")]
    pub db_law1: MultiplierName,
    #[serde(default = "default_db_law2")]
    pub db_law2: MultiplierName,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

impl SweepConfig {
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>, HarnessError> {
        let mut cells = Vec::new();
        for &design in &self.designs {
            for &case in &self.cases {
                for &n in &self.ns {
                    for &rho in &self.rhos {
                        for &k in &self.ks {
                            let cell = ExperimentConfig {
                                design,
                                rho,
                                n,
                                d: self.d,
                                k,
                                case,
                                theta: self.theta.unwrap_or_else(|| case.default_theta()),
                                methods: self.methods.clone(),
                                alpha: self.alpha,
                                b1: self.b1,
                                b2: self.b2,
                                reps: self.reps,
                                master_seed: self.master_seed,
                                threads: self.threads,
                                beta_nu: self.beta_nu,
                                db_law1: self.db_law1,
                                db_law2: self.db_law2,
                                checkpoint_every: self.checkpoint_every,
                            };
                            cell.validate()?;
                            cells.push(cell);
                        }
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(HarnessError::Config("sweep expands to zero cells".into()));
        }
        Ok(cells)
    }

    /// Desk-scale preset: d=100, n=200, B1=299, B2=49, reps=2000.
    pub fn desk_preset() -> Self {
        SweepConfig {
            designs: vec![Design::I, Design::II],
            rhos: vec![0.2, 0.8],
            ns: vec![200],
            ks: vec![2],
            cases: vec![CaseName::Asymmetric, CaseName::Symmetric],
            d: 100,
            theta: None,
            methods: vec![Method::GB, Method::MB, Method::RB, Method::BB],
            alpha: 0.1,
            b1: 299,
            b2: 49,
            reps: 2000,
            master_seed: 20_260_810,
            threads: 0,
            beta_nu: 0.1,
            db_law1: default_db_law1(),
            db_law2: default_db_law2(),
            checkpoint_every: default_checkpoint_every(),
        }
    }

    /// Full study grid (long-running): d=400, B1=499, B2=99, all methods.
    pub fn paper_preset() -> Self {
        SweepConfig {
            designs: vec![Design::I, Design::II],
            rhos: vec![0.2, 0.8],
            ns: vec![200, 400],
            ks: vec![2, 5, 10],
            cases: vec![CaseName::Asymmetric, CaseName::Symmetric],
            d: 400,
            theta: None,
            methods: Method::ALL.to_vec(),
            alpha: 0.1,
            b1: 499,
            b2: 99,
            reps: 1000,
            master_seed: 20_260_810,
            threads: 0,
            beta_nu: 0.1,
            db_law1: default_db_law1(),
            db_law2: default_db_law2(),
            checkpoint_every: default_checkpoint_every(),
        }
    }
}
