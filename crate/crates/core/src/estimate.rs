use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Zelterman,
    Chao,
    #[serde(rename = "ztpoisson")]
    ZtPoissonMle,
    ZeltermanReg,
    #[serde(rename = "ztpoisson-reg")]
    ZtPoissonReg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Zelterman,
        Method::Chao,
        Method::ZtPoissonMle,
        Method::ZeltermanReg,
        Method::ZtPoissonReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Zelterman => "zelterman",
            Method::Chao => "chao",
            Method::ZtPoissonMle => "ztpoisson",
            Method::ZeltermanReg => "zelterman-reg",
            Method::ZtPoissonReg => "ztpoisson-reg",
        }
    }

    /// Whether the method fits a covariate model on unit-level data.
    pub fn is_regression(self) -> bool {
        matches!(self, Method::ZeltermanReg | Method::ZtPoissonReg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method '{s}'")))
    }
}

/// Estimated population size with a normal-approximation 95% interval.
///
/// `se² = var_sampling + var_parameter`: the first term is the sampling
/// variance of the Horvitz–Thompson sum given the inclusion probabilities, the
/// second the delta-method contribution of the estimated rate parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationEstimate {
    pub method: Method,
    pub n_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_observed: u64,
    pub var_sampling: f64,
    pub var_parameter: f64,
}

impl PopulationEstimate {
    pub fn new(
        method: Method,
        n_hat: f64,
        n_observed: u64,
        var_sampling: f64,
        var_parameter: f64,
    ) -> Self {
        let se = (var_sampling + var_parameter).max(0.0).sqrt();
        Self {
            method,
            n_hat,
            se,
            ci_low: n_hat - Z_95 * se,
            ci_high: n_hat + Z_95 * se,
            n_observed,
            var_sampling,
            var_parameter,
        }
    }

    /// Estimated number of unobserved units.
    pub fn f0_hat(&self) -> f64 {
        self.n_hat - self.n_observed as f64
    }

    /// Fraction of the population that made it onto the list.
    pub fn completeness(&self) -> f64 {
        self.n_observed as f64 / self.n_hat
    }

    pub fn covers(&self, true_n: f64) -> bool {
        self.ci_low <= true_n && true_n <= self.ci_high
    }
}

/// A Poisson rate estimate with an interval built on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub lambda_hat: f64,
    /// Absent when no variance formula applies (Zelterman rates with `j != 1`).
    pub var_log_lambda: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl RateEstimate {
    pub fn new(lambda_hat: f64, var_log_lambda: Option<f64>) -> Self {
        let half = var_log_lambda.map(|v| Z_95 * v.max(0.0).sqrt());
        Self {
            lambda_hat,
            var_log_lambda,
            ci_low: half.map(|h| lambda_hat * (-h).exp()),
            ci_high: half.map(|h| lambda_hat * h.exp()),
        }
    }
}
