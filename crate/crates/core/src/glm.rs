//! Newton–Raphson maximum likelihood for binary logistic regression and
//! zero-truncated Poisson regression, plus likelihood-ratio tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::gamma_ur;

use crate::count::{ln_one_minus_exp_neg, one_minus_exp_neg, one_minus_exp_neg_times_1p};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-8;
const LL_REL_TOL: f64 = 1e-12;
const SCORE_TOL: f64 = 1e-6;
const RANK_TOL: f64 = 1e-10;
/// Coefficients beyond this magnitude with the likelihood still rising mean
/// the MLE does not exist.
const DIVERGENCE_BOUND: f64 = 30.0;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `P(z = 1) = e^η / (1 + e^η)`.
    Logistic,
    /// `P(Y = y | Y > 0)` with `λ = e^η`.
    ZtPoisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub columns: Vec<String>,
    pub beta: DVector<f64>,
    /// Inverse observed information at `beta`.
    pub cov_beta: DMatrix<f64>,
    pub log_lik: f64,
    pub aic: f64,
    pub n_fit: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        self.cov_beta.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == column).map(|i| self.beta[i])
    }
}

/// Log-likelihood with its gradient and negative Hessian at one `β`.
#[derive(Debug, Clone)]
pub struct Likelihood {
    pub log_lik: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_response(family: Family, design: &DesignMatrix, response: &[f64]) -> Result<()> {
    if design.nrows() != response.len() {
        return Err(Error::Usage(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            response.len()
        )));
    }
    let bad = match family {
        Family::Logistic => response.iter().position(|&z| z != 0.0 && z != 1.0),
        Family::ZtPoisson => response
            .iter()
            .position(|&y| !(y >= 1.0 && y.fract() == 0.0 && y.is_finite())),
    };
    if let Some(i) = bad {
        return Err(Error::validation(format!(
            "response {i} = {} is invalid for {family:?}",
            response[i]
        )));
    }
    Ok(())
}

/// Evaluate the log-likelihood, score and observed information.
pub fn evaluate(
    family: Family,
    design: &DesignMatrix,
    response: &[f64],
    beta: &DVector<f64>,
) -> Result<Likelihood> {
    check_response(family, design, response)?;
    if beta.len() != design.ncols() {
        return Err(Error::Usage(format!(
            "beta has {} entries for {} columns",
            beta.len(),
            design.ncols()
        )));
    }
    Ok(evaluate_unchecked(family, &design.matrix, response, beta))
}

fn evaluate_unchecked(
    family: Family,
    x: &DMatrix<f64>,
    response: &[f64],
    beta: &DVector<f64>,
) -> Likelihood {
    let p = x.ncols();
    let eta = x * beta;
    let mut log_lik = 0.0;
    // residual r_i = ∂ℓ_i/∂η_i and weight w_i = −∂²ℓ_i/∂η_i²
    let mut resid = DVector::zeros(eta.len());
    let mut weight = DVector::zeros(eta.len());
    for (i, (&e, &y)) in eta.iter().zip(response).enumerate() {
        match family {
            Family::Logistic => {
                let prob = logistic(e);
                log_lik += y * e - softplus(e);
                resid[i] = y - prob;
                weight[i] = prob * (1.0 - prob);
            }
            Family::ZtPoisson => {
                let lambda = e.exp();
                let w = one_minus_exp_neg(lambda);
                log_lik += y * e - lambda - ln_one_minus_exp_neg(lambda) - ln_factorial(y as u64);
                resid[i] = y - lambda / w;
                weight[i] = lambda * one_minus_exp_neg_times_1p(lambda) / (w * w);
            }
        }
    }
    let score = x.tr_mul(&resid);
    let mut information = DMatrix::zeros(p, p);
    for (i, row) in x.row_iter().enumerate() {
        information.ger(weight[i], &row.transpose(), &row.transpose(), 1.0);
    }
    Likelihood {
        log_lik,
        score,
        information,
    }
}

/// Fails unless the design has full column rank (pivoted QR, relative tolerance 1e-10).
pub fn check_full_rank(design: &DesignMatrix) -> Result<()> {
    let (rows, cols) = design.matrix.shape();
    if cols == 0 {
        return Err(Error::Singular("design has no columns".into()));
    }
    if rows < cols {
        return Err(Error::Singular(format!("{rows} rows for {cols} columns")));
    }
    let r = design.matrix.clone().col_piv_qr().r();
    let diag: Vec<f64> = r.diagonal().iter().map(|d| d.abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let rank = diag.iter().filter(|&&d| d > RANK_TOL * largest).count();
    if largest == 0.0 || rank < cols {
        return Err(Error::Singular(format!(
            "design rank {rank} < {cols} columns ({})",
            design.columns.join(", ")
        )));
    }
    Ok(())
}

fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fit a logistic regression of the binary `z` on `design`.
pub fn fit_logistic(design: &DesignMatrix, z: &[f64]) -> Result<FitResult> {
    fit(Family::Logistic, design, z)
}

/// Fit a zero-truncated Poisson regression of the counts `y` (all `>= 1`).
pub fn fit_zt_poisson_reg(design: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    fit(Family::ZtPoisson, design, y)
}

pub fn fit(family: Family, design: &DesignMatrix, response: &[f64]) -> Result<FitResult> {
    check_response(family, design, response)?;
    check_full_rank(design)?;
    let x = &design.matrix;

    let mut beta = DVector::zeros(design.ncols());
    if family == Family::Logistic {
        let mean = response.iter().sum::<f64>() / response.len() as f64;
        if mean == 0.0 || mean == 1.0 {
            return Err(Error::Separation(format!(
                "all {} outcomes are {mean}",
                response.len()
            )));
        }
        if let Some(i) = design.intercept_index() {
            beta[i] = (mean / (1.0 - mean)).ln();
        }
    }

    let mut state = evaluate_unchecked(family, x, response, &beta);
    for iteration in 1..=MAX_ITER {
        let chol = state.information.clone().cholesky().ok_or_else(|| {
            Error::Singular("information matrix is not positive definite".into())
        })?;
        let direction = chol.solve(&state.score);

        let mut scale = 1.0;
        let (next_beta, next_state) = loop {
            let candidate = &beta + &direction * scale;
            let cand_state = evaluate_unchecked(family, x, response, &candidate);
            // near the optimum the likelihood is flat to rounding; let Newton finish there
            let slack = LL_REL_TOL * state.log_lik.abs();
            if cand_state.log_lik.is_finite() && cand_state.log_lik >= state.log_lik - slack {
                break (candidate, cand_state);
            }
            scale *= 0.5;
            if scale < 0.5f64.powi(MAX_HALVINGS as i32) {
                // no ascent direction left: we are at the optimum to rounding
                break (beta.clone(), state.clone());
            }
        };

        let improved = next_state.log_lik > state.log_lik;
        if improved && max_abs(&next_beta) > DIVERGENCE_BOUND {
            let msg = format!(
                "coefficients exceed {DIVERGENCE_BOUND} while the likelihood still increases"
            );
            return Err(match family {
                Family::Logistic => Error::Separation(msg),
                Family::ZtPoisson => Error::Boundary(msg),
            });
        }

        let step = max_abs(&(&next_beta - &beta));
        let ll_change = (next_state.log_lik - state.log_lik).abs();
        beta = next_beta;
        state = next_state;
        let small = step < STEP_TOL || ll_change <= LL_REL_TOL * state.log_lik.abs();
        if small && max_abs(&state.score) < SCORE_TOL {
            let cov_beta = invert_spd(&state.information, "information matrix at the MLE")?;
            let k = beta.len() as f64;
            return Ok(FitResult {
                family,
                columns: design.columns.clone(),
                beta,
                cov_beta,
                log_lik: state.log_lik,
                aic: -2.0 * state.log_lik + 2.0 * k,
                n_fit: response.len(),
                converged: true,
                iterations: iteration,
            });
        }
    }
    Err(Error::Iteration {
        iterations: MAX_ITER,
        last: beta.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `G² = 2 (ℓ_full − ℓ_reduced)` against a chi-square with the column difference as df.
pub fn likelihood_ratio_test(full: &FitResult, reduced: &FitResult) -> Result<LrtResult> {
    if full.family != reduced.family {
        return Err(Error::Usage("models belong to different families".into()));
    }
    if full.n_fit != reduced.n_fit {
        return Err(Error::Usage(format!(
            "models were fit to different rows ({} vs {})",
            full.n_fit, reduced.n_fit
        )));
    }
    if let Some(c) = reduced.columns.iter().find(|c| !full.columns.contains(c)) {
        return Err(Error::Usage(format!(
            "models are not nested: '{c}' is missing from the larger model"
        )));
    }
    let df = full.columns.len().saturating_sub(reduced.columns.len());
    let statistic = 2.0 * (full.log_lik - reduced.log_lik);
    if statistic < -1e-8 {
        return Err(Error::Usage(format!(
            "larger model fits worse (G² = {statistic})"
        )));
    }
    let statistic = statistic.max(0.0);
    let p_value = if df == 0 {
        1.0
    } else {
        chi_square_upper_tail(statistic, df)?
    };
    Ok(LrtResult {
        statistic,
        df,
        p_value,
    })
}

/// `P(χ²_df > x)`.
pub fn chi_square_upper_tail(x: f64, df: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square statistic {x} < 0")));
    }
    if df == 0 {
        return Err(Error::Domain("chi-square needs df >= 1".into()));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0))
}
