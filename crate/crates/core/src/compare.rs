//! Sequences of nested regression models compared by likelihood ratio.

use crate::covariate::{estimate_regression, RegressionEstimate};
use crate::data::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::glm::{likelihood_ratio_test, LrtResult};

#[derive(Debug, Clone)]
pub struct ModelComparison {
    pub spec: ModelSpec,
    pub result: RegressionEstimate,
    /// Test against the previous model in the sequence.
    pub lrt: Option<LrtResult>,
}

/// Fit each model in turn and test it against its predecessor.
pub fn compare_models(
    dataset: &Dataset,
    method: Method,
    specs: &[ModelSpec],
) -> Result<Vec<ModelComparison>> {
    if !method.is_regression() {
        return Err(Error::Usage(format!("{method} does not fit covariate models")));
    }
    if specs.is_empty() {
        return Err(Error::Usage("no models to compare".into()));
    }
    let mut rows: Vec<ModelComparison> = Vec::with_capacity(specs.len());
    for spec in specs {
        let result = estimate_regression(dataset, spec, method)?;
        let lrt = match rows.last() {
            None => None,
            Some(prev) => {
                if let Some(t) = prev.spec.terms.iter().find(|t| !spec.terms.contains(t)) {
                    return Err(Error::Usage(format!(
                        "models are not nested: '{}' drops '{t}' from '{}'",
                        spec.label(),
                        prev.spec.label()
                    )));
                }
                Some(likelihood_ratio_test(&result.fit, &prev.result.fit)?)
            }
        };
        rows.push(ModelComparison {
            spec: spec.clone(),
            result,
            lrt,
        });
    }
    Ok(rows)
}
