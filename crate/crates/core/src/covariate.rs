//! Horvitz–Thompson population estimates with unit-specific inclusion
//! probabilities from a fitted regression.

use nalgebra::{DMatrix, DVector};

use crate::count::one_minus_exp_neg;
use crate::data::{build_design, Dataset, DesignMatrix, ModelSpec};
use crate::error::{Error, Result};
use crate::estimate::{Method, PopulationEstimate};
use crate::glm::{fit_logistic, fit_zt_poisson_reg, FitResult};

/// Floor applied to predicted inclusion probabilities.
pub const MIN_WEIGHT: f64 = 1e-12;

/// How the linear predictor maps to the Poisson rate behind `w = 1 − e^{−λ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateLink {
    /// `λ = 2e^η`, the odds of a doubleton against a singleton doubled.
    Zelterman,
    /// `λ = e^η`.
    ZtPoisson,
}

impl RateLink {
    fn v(self, eta: f64) -> f64 {
        match self {
            RateLink::Zelterman => -2.0 * eta.exp(),
            RateLink::ZtPoisson => -eta.exp(),
        }
    }
}

/// Per-unit linear predictors, inclusion probabilities and the gradients of `1/wᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights {
    pub link: RateLink,
    pub eta: Vec<f64>,
    /// `vᵢ = −λᵢ`, so that `wᵢ = 1 − e^{vᵢ}`.
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Row `i` is `∂(1/wᵢ)/∂β`.
    pub grad: DMatrix<f64>,
    /// Units whose `wᵢ` was raised to [`MIN_WEIGHT`].
    pub clamped: Vec<usize>,
}

impl UnitWeights {
    pub fn compute(link: RateLink, design: &DesignMatrix, beta: &DVector<f64>) -> Result<Self> {
        if beta.len() != design.ncols() {
            return Err(Error::Usage(format!(
                "beta has {} entries for {} design columns",
                beta.len(),
                design.ncols()
            )));
        }
        let eta_vec = &design.matrix * beta;
        let n = eta_vec.len();
        let mut eta = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut clamped = Vec::new();
        let mut grad = DMatrix::zeros(n, design.ncols());
        for (i, &e) in eta_vec.iter().enumerate() {
            let vi = link.v(e);
            let mut wi = one_minus_exp_neg(-vi);
            if !(wi >= MIN_WEIGHT) {
                wi = MIN_WEIGHT;
                clamped.push(i);
            }
            // d(1/w)/dη = −w'/w² with w' = −e^{v}·v
            let scale = (1.0 - wi) * vi / (wi * wi);
            grad.row_mut(i).copy_from(&(design.matrix.row(i) * scale));
            eta.push(e);
            v.push(vi);
            w.push(wi);
        }
        Ok(Self {
            link,
            eta,
            v,
            w,
            grad,
            clamped,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `Σ 1/wᵢ`.
    pub fn horvitz_thompson(&self) -> f64 {
        self.w.iter().map(|w| 1.0 / w).sum()
    }

    pub fn gradient_sum(&self) -> DVector<f64> {
        self.grad.row_sum().transpose()
    }
}

/// `(Σ (1−wᵢ)/wᵢ², gᵀ Cov g)` with `g = Σᵢ ∇(1/wᵢ)`.
pub fn zelterman_reg_variance(weights: &UnitWeights, cov_beta: &DMatrix<f64>) -> Result<(f64, f64)> {
    let p = weights.grad.ncols();
    if cov_beta.shape() != (p, p) {
        return Err(Error::Usage(format!(
            "covariance is {}x{} but the gradients have {p} columns",
            cov_beta.nrows(),
            cov_beta.ncols()
        )));
    }
    let var_sampling = weights.w.iter().map(|w| (1.0 - w) / (w * w)).sum();
    let g = weights.gradient_sum();
    let var_parameter = (g.transpose() * cov_beta * &g)[(0, 0)].max(0.0);
    Ok((var_sampling, var_parameter))
}

/// A regression fit together with the population estimate it implies.
#[derive(Debug, Clone)]
pub struct RegressionEstimate {
    pub fit: FitResult,
    pub estimate: PopulationEstimate,
    pub weights: UnitWeights,
}

fn horvitz_thompson_estimate(
    method: Method,
    link: RateLink,
    design: &DesignMatrix,
    fit: FitResult,
) -> Result<RegressionEstimate> {
    let weights = UnitWeights::compute(link, design, &fit.beta)?;
    let (var_sampling, var_parameter) = zelterman_reg_variance(&weights, &fit.cov_beta)?;
    let estimate = PopulationEstimate::new(
        method,
        weights.horvitz_thompson(),
        weights.len() as u64,
        var_sampling,
        var_parameter,
    );
    Ok(RegressionEstimate {
        fit,
        estimate,
        weights,
    })
}

/// Logistic regression of "seen twice" against "seen once" on the units with
/// counts 1 or 2, then a Horvitz–Thompson sum over every observed unit.
pub fn zelterman_regression(dataset: &Dataset, spec: &ModelSpec) -> Result<RegressionEstimate> {
    spec.validate(dataset.schema())?;
    let design = build_design(dataset, spec)?;
    let mut rows = Vec::new();
    let mut z = Vec::new();
    for (i, count) in dataset.counts().enumerate() {
        if count == 1 || count == 2 {
            rows.push(i);
            z.push(if count == 2 { 1.0 } else { 0.0 });
        }
    }
    for (needed, label) in [(0.0, "f1"), (1.0, "f2")] {
        if !z.contains(&needed) {
            return Err(Error::DegenerateData(format!(
                "{label}=0: no units with count {}",
                needed as u8 + 1
            )));
        }
    }
    let fit = fit_logistic(&design.select_rows(&rows), &z)?;
    horvitz_thompson_estimate(Method::ZeltermanReg, RateLink::Zelterman, &design, fit)
}

/// Zero-truncated Poisson regression on all units, then the Horvitz–Thompson sum.
pub fn zt_poisson_regression_estimate(
    dataset: &Dataset,
    spec: &ModelSpec,
) -> Result<RegressionEstimate> {
    spec.validate(dataset.schema())?;
    let design = build_design(dataset, spec)?;
    let y: Vec<f64> = dataset.counts().map(|c| c as f64).collect();
    let fit = fit_zt_poisson_reg(&design, &y)?;
    horvitz_thompson_estimate(Method::ZtPoissonReg, RateLink::ZtPoisson, &design, fit)
}

pub fn estimate_regression(
    dataset: &Dataset,
    spec: &ModelSpec,
    method: Method,
) -> Result<RegressionEstimate> {
    match method {
        Method::ZeltermanReg => zelterman_regression(dataset, spec),
        Method::ZtPoissonReg => zt_poisson_regression_estimate(dataset, spec),
        other => Err(Error::Usage(format!("{other} is not a regression method"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::tests::table1;
    use crate::data::{Covariate, CovariateValue, ObservedUnit, Schema};
    use crate::homogeneous::{zelterman_estimate, zt_poisson_mle};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn with_age(rows: &[(u64, f64)]) -> Dataset {
        let schema = Schema::new(vec![Covariate::continuous("age")]).unwrap();
        let units = rows
            .iter()
            .map(|&(count, age)| ObservedUnit {
                count,
                covariates: vec![CovariateValue::Numeric(age)],
            })
            .collect();
        Dataset::new(schema, units).unwrap()
    }

    fn sample() -> Vec<(u64, f64)> {
        vec![
            (1, 23.0), (1, 31.0), (2, 27.0), (1, 45.0), (3, 38.0), (2, 52.0), (1, 29.0),
            (4, 33.0), (1, 41.0), (2, 24.0), (1, 36.0), (5, 30.0), (1, 48.0), (2, 35.0),
            (1, 26.0), (1, 39.0), (6, 44.0), (2, 28.0), (1, 50.0), (1, 32.0),
        ]
    }

    #[test]
    fn intercept_only_reduces_to_homogeneous() {
        let table = table1();
        let data = Dataset::from_table(&table).unwrap();
        let spec = ModelSpec::intercept_only();

        let reg = zelterman_regression(&data, &spec).unwrap();
        let hom = zelterman_estimate(&table).unwrap();
        assert_relative_eq!(reg.estimate.n_hat, hom.n_hat, max_relative = 1e-9);
        assert_relative_eq!(reg.estimate.se, hom.se, max_relative = 1e-8);
        assert_eq!(reg.fit.n_fit as u64, table.f(1) + table.f(2));
        assert!((Z_HALF * reg.estimate.se - 5144.0).abs() < 1.0);

        let reg = zt_poisson_regression_estimate(&data, &spec).unwrap();
        let (_, hom) = zt_poisson_mle(&table).unwrap();
        assert_relative_eq!(reg.estimate.n_hat, hom.n_hat, max_relative = 1e-8);
        assert_relative_eq!(reg.estimate.se, hom.se, max_relative = 1e-6);
        assert!((reg.estimate.n_hat - 15325.0).abs() < 1.0);
    }

    const Z_HALF: f64 = crate::estimate::Z_95;

    #[test]
    fn meth_intercept_variance_terms() {
        let mut counts = vec![1; 261];
        counts.extend(std::iter::repeat_n(2, 10));
        counts.extend(std::iter::repeat_n(3, 3));
        let data = Dataset::from_counts(counts).unwrap();
        let reg = zelterman_regression(&data, &ModelSpec::intercept_only()).unwrap();
        let lambda: f64 = 2.0 * 10.0 / 261.0;
        let w = 1.0 - (-lambda).exp();
        let vs = 274.0 * (1.0 - w) / (w * w);
        let vp = (274.0 * (1.0 - w) * lambda / (w * w)).powi(2) * (1.0 / 261.0 + 1.0 / 10.0);
        let (got_s, got_p) = (reg.estimate.var_sampling, reg.estimate.var_parameter);
        assert_relative_eq!(got_s, vs, max_relative = 1e-9);
        assert_relative_eq!(got_p, vp, max_relative = 1e-8);
        assert!((Z_HALF * (vs + vp).sqrt() - 2296.0).abs() < 1.0);
    }

    #[test]
    fn degenerate_without_singletons_or_doubletons() {
        let only_ones = with_age(&[(1, 20.0), (1, 30.0), (3, 40.0)]);
        let err = zelterman_regression(&only_ones, &ModelSpec::intercept_only()).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(ref m) if m.starts_with("f2=0")), "{err}");
        let only_twos = with_age(&[(2, 20.0), (2, 30.0)]);
        let err = zelterman_regression(&only_twos, &ModelSpec::intercept_only()).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(ref m) if m.starts_with("f1=0")), "{err}");
    }

    #[test]
    fn high_count_units_only_enter_the_sum() {
        let rows = sample();
        let spec = ModelSpec::with_terms(["age"]);
        let full = zelterman_regression(&with_age(&rows), &spec).unwrap();
        let drop = rows.iter().position(|r| r.0 == 5).unwrap();
        let mut fewer = rows.clone();
        fewer.remove(drop);
        let reduced = zelterman_regression(&with_age(&fewer), &spec).unwrap();
        assert!((&full.fit.beta - &reduced.fit.beta).amax() < 1e-12);
        let removed = 1.0 / full.weights.w[drop];
        assert_relative_eq!(
            full.estimate.n_hat - reduced.estimate.n_hat,
            removed,
            max_relative = 1e-9
        );
    }

    #[test]
    fn centering_age_changes_nothing() {
        let rows = sample();
        let spec = ModelSpec::with_terms(["age"]);
        let shifted: Vec<(u64, f64)> = rows.iter().map(|&(c, a)| (c, (a - 35.0) / 10.0)).collect();
        for method in [Method::ZeltermanReg, Method::ZtPoissonReg] {
            let a = estimate_regression(&with_age(&rows), &spec, method).unwrap();
            let b = estimate_regression(&with_age(&shifted), &spec, method).unwrap();
            for (x, y) in a.weights.eta.iter().zip(&b.weights.eta) {
                assert!((x - y).abs() < 1e-8 * x.abs().max(1.0));
            }
            assert_relative_eq!(a.estimate.n_hat, b.estimate.n_hat, max_relative = 1e-8);
            assert_relative_eq!(a.estimate.se, b.estimate.se, max_relative = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = with_age(&sample());
        let spec = ModelSpec::with_terms(["age"]);
        let design = build_design(&data, &spec).unwrap();
        let reg = zelterman_regression(&data, &spec).unwrap();
        for link in [RateLink::Zelterman, RateLink::ZtPoisson] {
            for beta in [DVector::zeros(2), reg.fit.beta.clone()] {
                let at = UnitWeights::compute(link, &design, &beta).unwrap();
                let h = 1e-5;
                for k in 0..2 {
                    let mut up = beta.clone();
                    let mut down = beta.clone();
                    up[k] += h;
                    down[k] -= h;
                    let wu = UnitWeights::compute(link, &design, &up).unwrap();
                    let wd = UnitWeights::compute(link, &design, &down).unwrap();
                    for i in 0..at.len() {
                        let fd = (1.0 / wu.w[i] - 1.0 / wd.w[i]) / (2.0 * h);
                        let a = at.grad[(i, k)];
                        let scale = fd.abs().max(a.abs()).max(1.0);
                        assert!((fd - a).abs() <= 1e-5 * scale, "unit {i} col {k}: {fd} vs {a}");
                    }
                }
            }
        }
    }

    #[test]
    fn extreme_predictor_is_clamped_and_reported() {
        let design = DesignMatrix::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            vec![crate::data::INTERCEPT.into()],
        )
        .unwrap();
        let weights = UnitWeights::compute(RateLink::Zelterman, &design, &DVector::from_element(1, -40.0)).unwrap();
        assert_eq!(weights.clamped, vec![0, 1]);
        assert!(weights.w.iter().all(|&w| w == MIN_WEIGHT));
        assert!(weights.horvitz_thompson().is_finite());
    }

    #[test]
    fn variance_dimension_mismatch() {
        let data = with_age(&sample());
        let reg = zelterman_regression(&data, &ModelSpec::with_terms(["age"])).unwrap();
        assert!(zelterman_reg_variance(&reg.weights, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn near_certain_inclusion_has_no_sampling_variance() {
        let design = DesignMatrix::new(
            DMatrix::from_element(3, 1, 1.0),
            vec![crate::data::INTERCEPT.into()],
        )
        .unwrap();
        let weights = UnitWeights::compute(RateLink::ZtPoisson, &design, &DVector::from_element(1, 4.0)).unwrap();
        let (vs, _) = zelterman_reg_variance(&weights, &DMatrix::identity(1, 1)).unwrap();
        assert!(vs < 1e-20);
    }

    proptest! {
        #[test]
        fn parameter_variance_nonnegative(
            beta in prop::collection::vec(-2.0f64..1.0, 2),
            a in 0.0f64..3.0, b in -1.0f64..1.0, c in 0.0f64..3.0,
        ) {
            let data = with_age(&sample());
            let design = build_design(&data, &ModelSpec::with_terms(["age"])).unwrap();
            let beta = DVector::from_vec(vec![beta[0], beta[1] / 30.0]);
            let weights = UnitWeights::compute(RateLink::Zelterman, &design, &beta).unwrap();
            // L Lᵀ with L lower triangular is PSD for any entries
            let l = DMatrix::from_row_slice(2, 2, &[a, 0.0, b, c]);
            let cov = &l * l.transpose();
            let (vs, vp) = zelterman_reg_variance(&weights, &cov).unwrap();
            prop_assert!(vs >= 0.0 && vp >= 0.0);
        }
    }
}
