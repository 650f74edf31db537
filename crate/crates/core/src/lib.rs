//! Population size estimation from one-source, zero-truncated count data.
//!
//! The crate covers the homogeneous Zelterman, Chao and truncated-Poisson
//! estimators, Zelterman's estimator extended to covariates through a logistic
//! model on the units seen once or twice, and the truncated-Poisson regression
//! estimator it is usually compared against.

pub mod compare;
pub mod count;
pub mod covariate;
pub mod data;
pub mod error;
pub mod estimate;
pub mod glm;
pub mod homogeneous;
pub mod simulate;

pub use compare::{compare_models, ModelComparison};
pub use count::{mean_count, poisson_pmf, zt_poisson_pmf, FrequencyTable};
pub use covariate::{
    estimate_regression, zelterman_reg_variance, zelterman_regression,
    zt_poisson_regression_estimate, RateLink, RegressionEstimate, UnitWeights, MIN_WEIGHT,
};
pub use data::{
    build_design, read_frequency, read_frequency_csv, read_individual, read_individual_csv,
    write_frequency_csv, write_individual_csv, Covariate, CovariateKind, CovariateValue, Dataset,
    DesignMatrix, ModelSpec, ObservedUnit, Schema, INTERCEPT,
};
pub use error::{Error, Result};
pub use estimate::{Method, PopulationEstimate, RateEstimate, Z_95};
pub use glm::{
    chi_square_upper_tail, fit_logistic, fit_zt_poisson_reg, likelihood_ratio_test, Family,
    FitResult, LrtResult,
};
pub use homogeneous::{
    chao_estimate, doubleton_proportion, estimate_homogeneous, horvitz_thompson,
    rate_from_doubleton_proportion, solve_zt_poisson_rate, var_lambda1,
    zelterman_estimate, zelterman_lambda, zt_poisson_mle,
};
pub use simulate::{
    run_replicates, simulate_mixture, simulate_poisson, summarize, truncate_and_estimate,
    MethodSummary, PopulationModel, Replicate, ReplicateConfig, SimulatedPopulation,
    SimulatedUnit, PRNG_VERSION,
};
