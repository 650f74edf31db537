//! Poisson and zero-truncated Poisson probabilities, and the frequency table
//! that every homogeneous estimator works from.

use std::collections::BTreeMap;

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

fn check_rate(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "rate must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// `ln(1 - e^{-x})` for `x > 0` without cancellation at either end.
pub(crate) fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// `1 - e^{-x}`, accurate for small `x`.
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `1 - e^{-x}(1 + x)` for `x > 0`; a series below 0.5 avoids the
/// `O(x^2)` cancellation.
pub(crate) fn one_minus_exp_neg_times_1p(x: f64) -> f64 {
    if x >= 0.5 {
        return 1.0 - (-x).exp() * (1.0 + x);
    }
    // sum_{k>=2} (-1)^k (k-1) x^k / k!
    let mut sum = 0.0;
    let mut pow_over_fact = x;
    for k in 2..60 {
        pow_over_fact *= x / k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * (k - 1) as f64 * pow_over_fact;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Poisson probability `P(Y = j)`, evaluated in log space.
pub fn poisson_pmf(j: u64, lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    if j == 0 {
        return Ok((-lambda).exp());
    }
    Ok((j as f64 * lambda.ln() - lambda - ln_factorial(j)).exp())
}

/// Zero-truncated Poisson probability `P(Y = j | Y > 0)` for `j >= 1`.
pub fn zt_poisson_pmf(j: u64, lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    if j == 0 {
        return Err(Error::Domain(
            "zero-truncated Poisson has support j >= 1".into(),
        ));
    }
    let ln_p =
        j as f64 * lambda.ln() - lambda - ln_factorial(j) - ln_one_minus_exp_neg(lambda);
    Ok(ln_p.exp())
}

/// Observed frequencies `f_j` of a zero-truncated count.
///
/// The map is sparse: a missing `j` means `f_j = 0`. Keys are always `>= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    freq: BTreeMap<u64, u64>,
    n: u64,
    total: u64,
}

impl FrequencyTable {
    /// Tabulate raw counts. Every count must be at least 1.
    pub fn from_counts(counts: &[i64]) -> Result<Self> {
        let mut freq = BTreeMap::new();
        for (idx, &c) in counts.iter().enumerate() {
            if c < 1 {
                return Err(Error::validation(format!(
                    "count at index {idx} is {c}; counts must be >= 1"
                )));
            }
            *freq.entry(c as u64).or_insert(0) += 1;
        }
        Ok(Self::from_map(freq))
    }

    /// Build from `(j, f_j)` pairs. Duplicate `j` values and `j = 0` are rejected.
    pub fn from_frequencies<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut freq = BTreeMap::new();
        for (j, f) in pairs {
            if j == 0 {
                return Err(Error::validation(
                    "count value 0 cannot occur in zero-truncated data",
                ));
            }
            if freq.insert(j, f).is_some() {
                return Err(Error::validation(format!("duplicate count value {j}")));
            }
        }
        Ok(Self::from_map(freq))
    }

    fn from_map(mut freq: BTreeMap<u64, u64>) -> Self {
        freq.retain(|_, f| *f > 0);
        let n = freq.values().sum();
        let total = freq.iter().map(|(j, f)| j * f).sum();
        Self { freq, n, total }
    }

    /// `f_j`; zero for values that never occur.
    pub fn f(&self, j: u64) -> u64 {
        self.freq.get(&j).copied().unwrap_or(0)
    }

    /// Number of observed units.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Sum of all counts, `Σ j·f_j`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn max_count(&self) -> Option<u64> {
        self.freq.keys().next_back().copied()
    }

    /// Non-zero `(j, f_j)` pairs in increasing `j`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.freq.iter().map(|(&j, &f)| (j, f))
    }

    /// Expand back into one count per unit, sorted ascending.
    pub fn to_counts(&self) -> Vec<u64> {
        self.iter()
            .flat_map(|(j, f)| std::iter::repeat_n(j, f as usize))
            .collect()
    }

    pub fn mean_count(&self) -> Result<f64> {
        mean_count(self)
    }
}

pub fn mean_count(table: &FrequencyTable) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Domain("mean of an empty frequency table".into()));
    }
    Ok(table.total() as f64 / table.n() as f64)
}
