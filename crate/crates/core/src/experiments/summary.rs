use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{mean_var, simple_regression};

/// Replication statistics for one estimator at one sample size.
///
/// `variance` uses divisor `reps`, so that `rmse² = bias² + variance`
/// holds exactly for the computed moments. `bias` and `rmse` are NaN when
/// the truth is unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimator: String,
    pub n: usize,
    pub reps: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
    pub mc_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McSummary {
    pub fn from_values(estimator: &str, n: usize, values: &[f64], truth: Option<f64>) -> Self {
        let reps = values.len();
        let (mean, variance) = mean_var(values);
        let (bias, rmse) = match truth {
            Some(t) => {
                let b = mean - t;
                (b, (b * b + variance).sqrt())
            }
            None => (f64::NAN, f64::NAN),
        };
        let mc_se = (variance / reps as f64).sqrt();
        Self {
            estimator: estimator.to_string(),
            n,
            reps,
            mean,
            bias,
            variance,
            rmse,
            mc_se,
            ci_low: mean - 1.96 * mc_se,
            ci_high: mean + 1.96 * mc_se,
        }
    }

    /// `|bias| / mc_se`.
    pub fn bias_z(&self) -> f64 {
        self.bias.abs() / self.mc_se
    }

    /// Sample variance with divisor `reps − 1`.
    pub fn unbiased_variance(&self) -> f64 {
        if self.reps < 2 {
            return f64::NAN;
        }
        self.variance * self.reps as f64 / (self.reps as f64 - 1.0)
    }
}

/// OLS of `ln rmse` on `ln n`: `(slope, r²)`.
pub fn slope_fit(summaries: &[McSummary]) -> Result<(f64, f64)> {
    if summaries.len() < 3 {
        return invalid(format!(
            "slope fit needs at least 3 grid points, got {}",
            summaries.len()
        ));
    }
    if summaries.iter().any(|s| !(s.rmse > 0.0 && s.rmse.is_finite())) {
        return invalid("slope fit needs positive finite rmse at every grid point");
    }
    let x: Vec<f64> = summaries.iter().map(|s| (s.n as f64).ln()).collect();
    let y: Vec<f64> = summaries.iter().map(|s| s.rmse.ln()).collect();
    let (slope, _, r2) = simple_regression(&x, &y);
    Ok((slope, r2))
}

/// Per-replication values keyed by `(grid index, replication)`.
///
/// Merging is a keyed union, so any merge order yields the same contents
/// and the final summaries are always formed in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collector {
    entries: BTreeMap<(usize, usize), Vec<f64>>,
}

impl Collector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, grid_index: usize, rep: usize, values: Vec<f64>) {
        self.entries.insert((grid_index, rep), values);
    }

    pub fn merge(mut self, other: Collector) -> Collector {
        self.entries.extend(other.entries);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Column `estimator` of every replication at `grid_index`, in
    /// replication order.
    pub fn column(&self, grid_index: usize, estimator: usize) -> Vec<f64> {
        self.entries
            .range((grid_index, 0)..(grid_index + 1, 0))
            .map(|(_, v)| v[estimator])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rep_summary() {
        let s = McSummary::from_values("x", 10, &[3.5], Some(3.0));
        assert_eq!(s.mean, 3.5);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.bias, 0.5);
        assert_eq!(s.rmse, 0.5);
    }

    #[test]
    fn slope_needs_three_points() {
        let s = McSummary::from_values("x", 10, &[1.0, 2.0], Some(0.0));
        assert!(slope_fit(&[s.clone(), s]).is_err());
    }
}
