//! Report structures. JSON carries full precision; every value shown in text
//! mode is also stored under `rounded` as the exact string printed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use popsize::{
    FitResult, FrequencyTable, LrtResult, MethodSummary, PopulationEstimate, RateEstimate,
    RegressionEstimate, MIN_WEIGHT,
};
use serde::Serialize;

use crate::input::DataFormat;

pub const SCHEMA_VERSION: u32 = 1;

pub fn whole(x: f64) -> String {
    format!("{x:.0}")
}

pub fn four(x: f64) -> String {
    format!("{x:.4}")
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub format: DataFormat,
    /// Units for individual files, distinct non-zero count values for frequency files.
    pub rows: usize,
    pub n_observed: u64,
    /// Count value to frequency.
    pub frequencies: BTreeMap<u64, u64>,
}

impl InputDigest {
    pub fn new(path: &str, format: DataFormat, rows: usize, table: &FrequencyTable) -> Self {
        Self {
            path: path.to_string(),
            format,
            rows,
            n_observed: table.n(),
            frequencies: table.iter().collect(),
        }
    }

    fn text(&self, out: &mut String) {
        let shape = match self.format {
            DataFormat::Individual => format!("individual, {} units", self.rows),
            DataFormat::Frequency => format!("frequency, {} count values", self.rows),
        };
        writeln!(out, "data          {} ({shape})", self.path).unwrap();
        writeln!(out, "observed      n = {}", self.n_observed).unwrap();
        let freqs: Vec<String> = self.frequencies.iter().map(|(j, f)| format!("f{j}={f}")).collect();
        writeln!(out, "frequencies   {}", freqs.join(" ")).unwrap();
    }
}

#[derive(Debug, Serialize)]
pub struct RoundedEstimate {
    pub n_hat: String,
    pub se: String,
    pub ci_low: String,
    pub ci_high: String,
    pub f0_hat: String,
    pub completeness: String,
}

#[derive(Debug, Serialize)]
pub struct EstimateBlock {
    #[serde(flatten)]
    pub estimate: PopulationEstimate,
    pub f0_hat: f64,
    pub completeness: f64,
    pub rounded: RoundedEstimate,
}

impl From<&PopulationEstimate> for EstimateBlock {
    fn from(e: &PopulationEstimate) -> Self {
        Self {
            estimate: e.clone(),
            f0_hat: e.f0_hat(),
            completeness: e.completeness(),
            rounded: RoundedEstimate {
                n_hat: whole(e.n_hat),
                se: whole(e.se),
                ci_low: whole(e.ci_low),
                ci_high: whole(e.ci_high),
                f0_hat: whole(e.f0_hat()),
                completeness: four(e.completeness()),
            },
        }
    }
}

impl EstimateBlock {
    fn text(&self, out: &mut String) {
        let r = &self.rounded;
        writeln!(out, "N             {} (95% CI {}, {})", r.n_hat, r.ci_low, r.ci_high).unwrap();
        writeln!(out, "se            {}", r.se).unwrap();
        writeln!(out, "unobserved    {}", r.f0_hat).unwrap();
        writeln!(out, "completeness  {}", r.completeness).unwrap();
    }
}

#[derive(Debug, Serialize)]
pub struct RoundedRate {
    pub lambda_hat: String,
    pub ci_low: Option<String>,
    pub ci_high: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RateBlock {
    #[serde(flatten)]
    pub rate: RateEstimate,
    pub rounded: RoundedRate,
}

impl From<&RateEstimate> for RateBlock {
    fn from(r: &RateEstimate) -> Self {
        Self {
            rate: r.clone(),
            rounded: RoundedRate {
                lambda_hat: four(r.lambda_hat),
                ci_low: r.ci_low.map(four),
                ci_high: r.ci_high.map(four),
            },
        }
    }
}

impl RateBlock {
    fn text(&self, out: &mut String) {
        let r = &self.rounded;
        match (&r.ci_low, &r.ci_high) {
            (Some(lo), Some(hi)) => {
                writeln!(out, "lambda        {} (95% CI {lo}, {hi})", r.lambda_hat).unwrap()
            }
            _ => writeln!(out, "lambda        {}", r.lambda_hat).unwrap(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub rounded_estimate: String,
    pub rounded_std_error: String,
}

#[derive(Debug, Serialize)]
pub struct ModelBlock {
    pub label: String,
    pub family: popsize::Family,
    pub coefficients: Vec<Coefficient>,
    pub log_lik: f64,
    pub aic: f64,
    pub n_fit: usize,
    pub iterations: usize,
    pub converged: bool,
    pub rounded_log_lik: String,
    pub rounded_aic: String,
}

impl ModelBlock {
    pub fn new(label: String, fit: &FitResult) -> Self {
        let coefficients = fit
            .columns
            .iter()
            .zip(fit.beta.iter())
            .zip(fit.std_errors())
            .map(|((name, &estimate), std_error)| Coefficient {
                name: name.clone(),
                estimate,
                std_error,
                rounded_estimate: four(estimate),
                rounded_std_error: four(std_error),
            })
            .collect();
        Self {
            label,
            family: fit.family,
            coefficients,
            log_lik: fit.log_lik,
            aic: fit.aic,
            n_fit: fit.n_fit,
            iterations: fit.iterations,
            converged: fit.converged,
            rounded_log_lik: four(fit.log_lik),
            rounded_aic: four(fit.aic),
        }
    }

    fn text(&self, out: &mut String) {
        writeln!(out, "model         {} ({} rows)", self.label, self.n_fit).unwrap();
        let width = self.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(0).max(4);
        writeln!(out, "  {:width$}  {:>10}  {:>10}", "term", "estimate", "std.error").unwrap();
        for c in &self.coefficients {
            writeln!(
                out,
                "  {:width$}  {:>10}  {:>10}",
                c.name, c.rounded_estimate, c.rounded_std_error
            )
            .unwrap();
        }
        writeln!(out, "log-lik       {}", self.rounded_log_lik).unwrap();
        writeln!(out, "AIC           {}", self.rounded_aic).unwrap();
    }
}

pub fn warnings_for(method: popsize::Method, table: &FrequencyTable, fit: Option<&RegressionEstimate>) -> Vec<String> {
    use popsize::Method::*;
    let mut warnings = Vec::new();
    if matches!(method, Zelterman | Chao | ZeltermanReg) {
        let (f1, f2) = (table.f(1), table.f(2));
        if f1 < 5 || f2 < 5 {
            warnings.push(format!(
                "near-degenerate: f1={f1}, f2={f2}; the normal interval is unreliable"
            ));
        }
    }
    if let Some(r) = fit {
        if !r.weights.clamped.is_empty() {
            warnings.push(format!(
                "inclusion probability clamped at {MIN_WEIGHT:e} for {} units",
                r.weights.clamped.len()
            ));
        }
    }
    warnings
}

fn warnings_text(warnings: &[String], out: &mut String) {
    for w in warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub method: popsize::Method,
    pub input: InputDigest,
    pub estimate: EstimateBlock,
    pub rate: Option<RateBlock>,
    pub model: Option<ModelBlock>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "method        {}", self.method).unwrap();
        self.input.text(&mut out);
        if let Some(rate) = &self.rate {
            rate.text(&mut out);
        }
        self.estimate.text(&mut out);
        if let Some(model) = &self.model {
            model.text(&mut out);
        }
        warnings_text(&self.warnings, &mut out);
        out
    }
}

#[derive(Debug, Serialize)]
pub struct LrtBlock {
    #[serde(flatten)]
    pub lrt: LrtResult,
    pub rounded_statistic: String,
    pub rounded_p_value: String,
}

impl From<&LrtResult> for LrtBlock {
    fn from(l: &LrtResult) -> Self {
        Self {
            lrt: *l,
            rounded_statistic: four(l.statistic),
            rounded_p_value: four(l.p_value),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompareRow {
    pub estimate: EstimateBlock,
    pub model: ModelBlock,
    /// Test against the previous row.
    pub lrt: Option<LrtBlock>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub method: popsize::Method,
    pub input: InputDigest,
    pub models: Vec<CompareRow>,
}

impl CompareReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "method        {}", self.method).unwrap();
        self.input.text(&mut out);
        let width = self.models.iter().map(|m| m.model.label.len()).max().unwrap_or(0).max(5);
        writeln!(
            out,
            "{:width$}  {:>8}  {:>19}  {:>11}  {:>10}  {:>8}  {:>2}  {:>6}",
            "model", "N", "95% CI", "log-lik", "AIC", "G2", "df", "p"
        )
        .unwrap();
        for row in &self.models {
            let e = &row.estimate.rounded;
            let ci = format!("{}, {}", e.ci_low, e.ci_high);
            let (g2, df, p) = match &row.lrt {
                Some(l) => (l.rounded_statistic.clone(), l.lrt.df.to_string(), l.rounded_p_value.clone()),
                None => (String::new(), String::new(), String::new()),
            };
            writeln!(
                out,
                "{:width$}  {:>8}  {:>19}  {:>11}  {:>10}  {:>8}  {:>2}  {:>6}",
                row.model.label, e.n_hat, ci, row.model.rounded_log_lik, row.model.rounded_aic, g2, df, p
            )
            .unwrap();
        }
        for row in &self.models {
            for w in &row.warnings {
                writeln!(out, "warning: {}: {w}", row.model.label).unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Serialize)]
pub struct SimEstimate {
    pub method: popsize::Method,
    pub n_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covers: Option<bool>,
    pub error: Option<String>,
    pub rounded_n_hat: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SimReplicate {
    pub seed: u64,
    pub n_observed: u64,
    pub estimates: Vec<SimEstimate>,
}

#[derive(Debug, Serialize)]
pub struct SimSummary {
    #[serde(flatten)]
    pub summary: MethodSummary,
    pub rounded_mean_n_hat: String,
    pub rounded_mean_relative_bias: String,
    pub rounded_coverage: String,
}

impl From<MethodSummary> for SimSummary {
    fn from(s: MethodSummary) -> Self {
        Self {
            rounded_mean_n_hat: whole(s.mean_n_hat),
            rounded_mean_relative_bias: four(s.mean_relative_bias),
            rounded_coverage: four(s.coverage),
            summary: s,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub prng: &'static str,
    pub n_pop: u64,
    pub model: popsize::PopulationModel,
    pub seed_base: u64,
    pub replicates: Vec<SimReplicate>,
    pub summary: Vec<SimSummary>,
}

impl SimulateReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "prng          {}", self.prng).unwrap();
        writeln!(out, "population    {}", self.n_pop).unwrap();
        let model = match &self.model {
            popsize::PopulationModel::Poisson(l) => format!("Poisson({l})"),
            popsize::PopulationModel::Mixture(c) => c
                .iter()
                .map(|(w, l)| format!("{w}*Poisson({l})"))
                .collect::<Vec<_>>()
                .join(" + "),
        };
        writeln!(out, "model         {model}").unwrap();
        writeln!(out, "seeds         {} from {}", self.replicates.len(), self.seed_base).unwrap();
        let widths: Vec<usize> = self
            .summary
            .iter()
            .map(|s| s.summary.method.name().len().max(8))
            .collect();
        write!(out, "{:>20}  {:>8}", "seed", "n").unwrap();
        for (s, w) in self.summary.iter().zip(&widths) {
            write!(out, "  {:>w$}", s.summary.method.name()).unwrap();
        }
        out.push('\n');
        for r in &self.replicates {
            write!(out, "{:>20}  {:>8}", r.seed, r.n_observed).unwrap();
            for (e, w) in r.estimates.iter().zip(&widths) {
                let cell = e.rounded_n_hat.as_deref().unwrap_or("error");
                write!(out, "  {cell:>w$}").unwrap();
            }
            out.push('\n');
        }
        writeln!(
            out,
            "{:14}  {:>10}  {:>9}  {:>8}  {:>8}",
            "method", "mean N", "rel.bias", "coverage", "failures"
        )
        .unwrap();
        for s in &self.summary {
            writeln!(
                out,
                "{:14}  {:>10}  {:>9}  {:>8}  {:>8}",
                s.summary.method.name(),
                s.rounded_mean_n_hat,
                s.rounded_mean_relative_bias,
                s.rounded_coverage,
                s.summary.failures
            )
            .unwrap();
        }
        out
    }
}
