//! Seeded synthetic populations for checking estimators against a known truth.
//!
//! Every unit draws from its own ChaCha8 stream (stream id = unit index, key =
//! the little-endian seed zero-padded to 32 bytes), so a population is fully
//! determined by its inputs regardless of platform or thread count.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::count::FrequencyTable;
use crate::covariate::estimate_regression;
use crate::data::{write_individual_csv, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::estimate::{Method, PopulationEstimate};
use crate::homogeneous::estimate_homogeneous;

/// Identifies the generator and the way draws are assigned to units.
pub const PRNG_VERSION: &str = "chacha8-stream-per-unit-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulatedUnit {
    pub true_lambda: f64,
    pub count: u64,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPopulation {
    pub true_n: u64,
    pub seed: u64,
    pub units: Vec<SimulatedUnit>,
}

impl SimulatedPopulation {
    pub fn n_observed(&self) -> u64 {
        self.units.iter().filter(|u| u.observed).count() as u64
    }

    /// Counts of the observed units, in unit order.
    pub fn observed_counts(&self) -> Vec<u64> {
        self.units.iter().filter(|u| u.observed).map(|u| u.count).collect()
    }

    pub fn observed_table(&self) -> FrequencyTable {
        FrequencyTable::from_frequencies(
            self.observed_counts()
                .into_iter()
                .fold(std::collections::BTreeMap::new(), |mut m, c| {
                    *m.entry(c).or_insert(0u64) += 1;
                    m
                }),
        )
        .expect("observed counts are positive")
    }

    pub fn observed_dataset(&self) -> Result<Dataset> {
        Dataset::from_counts(self.observed_counts())
    }

    /// Observed units in the individual-record CSV layout.
    pub fn write_observed_csv<W: Write>(&self, out: W) -> Result<()> {
        write_individual_csv(&self.observed_dataset()?, "count", out)
    }
}

/// A Poisson rate or a finite mixture of rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationModel {
    Poisson(f64),
    Mixture(Vec<(f64, f64)>),
}

impl PopulationModel {
    pub fn components(&self) -> Vec<(f64, f64)> {
        match self {
            PopulationModel::Poisson(lambda) => vec![(1.0, *lambda)],
            PopulationModel::Mixture(c) => c.clone(),
        }
    }

    /// Parse `"w:λ,w:λ,..."`.
    pub fn parse_mixture(text: &str) -> Result<Self> {
        let mut components = Vec::new();
        for part in text.split(',') {
            let (w, l) = part
                .split_once(':')
                .ok_or_else(|| Error::Usage(format!("mixture component '{part}' is not w:lambda")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Usage(format!("'{s}' in mixture component '{part}' is not a number")))
            };
            components.push((parse(w)?, parse(l)?));
        }
        validate_components(&components).map_err(|e| Error::Usage(e.to_string()))?;
        Ok(PopulationModel::Mixture(components))
    }

    pub fn simulate(&self, n_pop: u64, seed: u64) -> Result<SimulatedPopulation> {
        simulate_mixture(n_pop, &self.components(), seed)
    }
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda={lambda} must be positive and finite")))
    }
}

fn validate_components(components: &[(f64, f64)]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::Domain("mixture has no components".into()));
    }
    for &(w, lambda) in components {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!("mixture weight {w} must be positive")));
        }
        check_rate(lambda)?;
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Inversion sampler over a tabulated cumulative distribution.
#[derive(Debug, Clone)]
struct PoissonSampler {
    cdf: Vec<f64>,
}

impl PoissonSampler {
    fn new(lambda: f64) -> Self {
        let ln_lambda = lambda.ln();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        let mut ln_pmf = -lambda;
        let mut k = 0u64;
        loop {
            let pmf = ln_pmf.exp();
            acc += pmf;
            cdf.push(acc);
            if k as f64 > lambda && (pmf < 1e-18 || acc >= 1.0) {
                break;
            }
            k += 1;
            ln_pmf += ln_lambda - (k as f64).ln();
        }
        Self { cdf }
    }

    fn sample(&self, u: f64) -> u64 {
        self.cdf.partition_point(|&f| f <= u).min(self.cdf.len() - 1) as u64
    }
}

/// Uniform on `[0, 1)` with 53 random bits.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn simulate_poisson(n_pop: u64, lambda: f64, seed: u64) -> Result<SimulatedPopulation> {
    check_rate(lambda)?;
    simulate_mixture(n_pop, &[(1.0, lambda)], seed)
}

/// Each unit picks a component by weight, then draws a Poisson count from it.
pub fn simulate_mixture(
    n_pop: u64,
    components: &[(f64, f64)],
    seed: u64,
) -> Result<SimulatedPopulation> {
    if n_pop == 0 {
        return Err(Error::Domain("n_pop must be at least 1".into()));
    }
    validate_components(components)?;
    let samplers: Vec<PoissonSampler> = components.iter().map(|c| PoissonSampler::new(c.1)).collect();
    let mut cumulative: Vec<f64> = components
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.0;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().expect("non-empty") = f64::INFINITY;

    let base = base_rng(seed);
    let units = (0..n_pop)
        .map(|i| {
            let mut rng = base.clone();
            rng.set_stream(i);
            let u_count = uniform(&mut rng);
            let u_comp = uniform(&mut rng);
            let c = if components.len() == 1 {
                0
            } else {
                cumulative.partition_point(|&f| f <= u_comp)
            };
            let count = samplers[c].sample(u_count);
            SimulatedUnit {
                true_lambda: components[c].1,
                count,
                observed: count >= 1,
            }
        })
        .collect();
    Ok(SimulatedPopulation {
        true_n: n_pop,
        seed,
        units,
    })
}

/// Run `method` on the observed part of `pop`. Regression methods use the
/// intercept-only model since simulated units carry no covariates.
pub fn truncate_and_estimate(pop: &SimulatedPopulation, method: Method) -> Result<PopulationEstimate> {
    if method.is_regression() {
        let data = pop.observed_dataset()?;
        Ok(estimate_regression(&data, &ModelSpec::intercept_only(), method)?.estimate)
    } else {
        estimate_homogeneous(&pop.observed_table(), method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateConfig {
    pub n_pop: u64,
    pub model: PopulationModel,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
}

#[derive(Debug)]
pub struct Replicate {
    pub seed: u64,
    pub n_observed: u64,
    /// One entry per configured method, in order.
    pub estimates: Vec<Result<PopulationEstimate>>,
}

/// Simulate and estimate every seed; replicates run in parallel but the output
/// follows `config.seeds`.
pub fn run_replicates(config: &ReplicateConfig) -> Result<Vec<Replicate>> {
    validate_components(&config.model.components())?;
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let pop = config.model.simulate(config.n_pop, seed)?;
            let estimates = config
                .methods
                .iter()
                .map(|&m| truncate_and_estimate(&pop, m))
                .collect();
            Ok(Replicate {
                seed,
                n_observed: pop.n_observed(),
                estimates,
            })
        })
        .collect()
}

/// Write each seed's observed units to `dir/seed-<seed>.csv`.
pub fn dump_populations(config: &ReplicateConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for &seed in &config.seeds {
        let pop = config.model.simulate(config.n_pop, seed)?;
        let path = dir.join(format!("seed-{seed}.csv"));
        let file = std::fs::File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        pop.write_observed_csv(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub mean_n_hat: f64,
    pub mean_relative_bias: f64,
    pub coverage: f64,
}

/// Aggregate the successful estimates of the `index`-th method.
pub fn summarize(replicates: &[Replicate], index: usize, method: Method, true_n: u64) -> MethodSummary {
    let truth = true_n as f64;
    let ok: Vec<&PopulationEstimate> = replicates
        .iter()
        .filter_map(|r| r.estimates.get(index).and_then(|e| e.as_ref().ok()))
        .collect();
    let k = ok.len() as f64;
    let mean = |f: &dyn Fn(&PopulationEstimate) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|e| f(e)).sum::<f64>() / k
        }
    };
    MethodSummary {
        method,
        replicates: replicates.len(),
        failures: replicates.len() - ok.len(),
        mean_n_hat: mean(&|e| e.n_hat),
        mean_relative_bias: mean(&|e| (e.n_hat - truth) / truth),
        coverage: mean(&|e| f64::from(u8::from(e.covers(truth)))),
    }
}
