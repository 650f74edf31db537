//! Estimators that need only the frequency table: Zelterman, Chao and the
//! homogeneous zero-truncated Poisson MLE.

use crate::count::{mean_count, one_minus_exp_neg, one_minus_exp_neg_times_1p, FrequencyTable};
use crate::error::{Error, Result};
use crate::estimate::{Method, PopulationEstimate, RateEstimate};

/// Zelterman's local rate estimate `λ̂_j = (j+1) f_{j+1} / f_j`.
///
/// For `j = 1` the log-scale variance `1/f₁ + 1/f₂` from the binomial
/// likelihood on `{1, 2}` is attached; other `j` carry no variance.
pub fn zelterman_lambda(table: &FrequencyTable, j: u64) -> Result<RateEstimate> {
    if j == 0 {
        return Err(Error::Domain("Zelterman rate needs j >= 1".into()));
    }
    let fj = table.f(j);
    let fnext = table.f(j + 1);
    if fj == 0 {
        return Err(Error::DegenerateData(format!(
            "f{j}=0: denominator frequency zero"
        )));
    }
    if fnext == 0 {
        return Err(Error::DegenerateData(format!(
            "f{}=0: estimator collapses to lambda=0",
            j + 1
        )));
    }
    let lambda = (j + 1) as f64 * fnext as f64 / fj as f64;
    let var_log = (j == 1).then(|| 1.0 / fj as f64 + 1.0 / fnext as f64);
    Ok(RateEstimate::new(lambda, var_log))
}

/// `Var(λ̂₁) ≈ 4 f₂ (f₁ + f₂) / f₁³`.
pub fn var_lambda1(table: &FrequencyTable) -> Result<f64> {
    let f1 = table.f(1) as f64;
    let f2 = table.f(2) as f64;
    if f1 == 0.0 {
        return Err(Error::DegenerateData("f1=0: variance undefined".into()));
    }
    Ok(4.0 * f2 * (f1 + f2) / (f1 * f1 * f1))
}

/// MLE of `P(Y = 2 | Y ∈ {1, 2}) = λ/(2 + λ)`, which is `f₂/(f₁ + f₂)`.
pub fn doubleton_proportion(table: &FrequencyTable) -> Result<f64> {
    let f1 = table.f(1) as f64;
    let f2 = table.f(2) as f64;
    if f1 + f2 == 0.0 {
        return Err(Error::DegenerateData("f1=f2=0: no singletons or doubletons".into()));
    }
    Ok(f2 / (f1 + f2))
}

/// Inverts `p = λ/(2 + λ)`.
pub fn rate_from_doubleton_proportion(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("proportion {p} outside [0, 1)")));
    }
    Ok(2.0 * p / (1.0 - p))
}

/// Horvitz–Thompson total `n / (1 - e^{-λ})` for a common inclusion probability.
pub fn horvitz_thompson(n: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || lambda.is_nan() {
        return Err(Error::Domain(format!(
            "inclusion probability vanishes for lambda={lambda}"
        )));
    }
    Ok(n as f64 / one_minus_exp_neg(lambda))
}

pub fn zelterman_estimate(table: &FrequencyTable) -> Result<PopulationEstimate> {
    let rate = zelterman_lambda(table, 1)?;
    let lambda = rate.lambda_hat;
    let n = table.n() as f64;
    let w = one_minus_exp_neg(lambda);
    let miss = 1.0 - w;
    let var_sampling = n * miss / (w * w);
    // d(n/w)/d(log λ), then the delta method on Var(log λ̂₁).
    let slope = n * miss * lambda / (w * w);
    let var_parameter = slope * slope * rate.var_log_lambda.unwrap_or(0.0);
    Ok(PopulationEstimate::new(
        Method::Zelterman,
        n / w,
        table.n(),
        var_sampling,
        var_parameter,
    ))
}

/// Chao's lower-bound estimator `n + f₁²/(2f₂)`.
///
/// The standard error follows Chao (1987):
/// `f₂ [¼ r⁴ + r³ + ½ r²]` with `r = f₁/f₂`. It is not split into sampling
/// and parameter parts; the whole variance sits in `var_sampling`.
pub fn chao_estimate(table: &FrequencyTable) -> Result<PopulationEstimate> {
    let f1 = table.f(1) as f64;
    let f2 = table.f(2) as f64;
    if f2 == 0.0 {
        return Err(Error::DegenerateData("f2=0: Chao estimator undefined".into()));
    }
    let r = f1 / f2;
    let var = f2 * (0.25 * r.powi(4) + r.powi(3) + 0.5 * r * r);
    Ok(PopulationEstimate::new(
        Method::Chao,
        table.n() as f64 + f1 * f1 / (2.0 * f2),
        table.n(),
        var,
        0.0,
    ))
}

const MLE_TOL: f64 = 1e-10;
const MLE_MAX_ITER: usize = 100;

/// Solves `λ / (1 - e^{-λ}) = mean` for the zero-truncated Poisson rate.
///
/// Newton from `λ = mean`, falling back to bisection whenever an iterate
/// leaves the bracket `(0, 2·mean]`.
pub fn solve_zt_poisson_rate(mean: f64) -> Result<f64> {
    if !(mean > 1.0) || !mean.is_finite() {
        return Err(Error::DegenerateData(format!(
            "mean count {mean} <= 1: truncated Poisson score has no positive root"
        )));
    }
    let score = |l: f64| l / one_minus_exp_neg(l) - mean;
    let mut lo = 0.0;
    let mut hi = 2.0 * mean;
    let mut lambda = mean;
    for _ in 0..MLE_MAX_ITER {
        let g = score(lambda);
        if g > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let w = one_minus_exp_neg(lambda);
        let slope = one_minus_exp_neg_times_1p(lambda) / (w * w);
        let mut next = lambda - g / slope;
        if !(next > lo && next <= hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = next - lambda;
        lambda = next;
        if step.abs() < MLE_TOL {
            return Ok(lambda);
        }
    }
    Err(Error::Iteration {
        iterations: MLE_MAX_ITER,
        last: vec![lambda],
    })
}

/// Homogeneous zero-truncated Poisson MLE of `λ` and the implied population size.
pub fn zt_poisson_mle(table: &FrequencyTable) -> Result<(RateEstimate, PopulationEstimate)> {
    let mean = mean_count(table)?;
    let lambda = solve_zt_poisson_rate(mean)?;
    let n = table.n() as f64;
    let total = table.total() as f64;

    // Observed information in λ is total/λ² − n e^{-λ}/(1−e^{-λ})²; multiplying
    // by λ² gives the information for log λ. e^{-λ}/(1−e^{-λ})² = 1/(4 sinh²(λ/2)).
    let half_sinh = (0.5 * lambda).sinh();
    let info_log = total - n * lambda * lambda / (4.0 * half_sinh * half_sinh);
    if !(info_log > 0.0) {
        return Err(Error::DegenerateData(
            "observed information is not positive at the MLE".into(),
        ));
    }
    let var_log = 1.0 / info_log;
    let rate = RateEstimate::new(lambda, Some(var_log));

    let w = one_minus_exp_neg(lambda);
    let miss = 1.0 - w;
    let var_sampling = n * miss / (w * w);
    let slope = n * miss * lambda / (w * w);
    let estimate = PopulationEstimate::new(
        Method::ZtPoissonMle,
        horvitz_thompson(table.n(), lambda)?,
        table.n(),
        var_sampling,
        slope * slope * var_log,
    );
    Ok((rate, estimate))
}

/// Run one of the homogeneous estimators by name.
pub fn estimate_homogeneous(table: &FrequencyTable, method: Method) -> Result<PopulationEstimate> {
    match method {
        Method::Zelterman => zelterman_estimate(table),
        Method::Chao => chao_estimate(table),
        Method::ZtPoissonMle => zt_poisson_mle(table).map(|(_, e)| e),
        other => Err(Error::Usage(format!(
            "{other} needs unit-level data, not a frequency table"
        ))),
    }
}
