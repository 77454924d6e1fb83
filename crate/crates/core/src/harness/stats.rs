//! Paired t-tests with Bonferroni correction.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value times the number of comparisons, at most 1.
    pub p_value: f64,
    /// The paired differences have zero variance; `p_value` is 1.
    pub degenerate: bool,
}

pub fn paired_ttest(a: &[f64], b: &[f64], num_comparisons: usize) -> Result<TTest, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::Stats(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(HarnessError::Stats("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Ok(TTest { t: f64::NAN, p_value: 1.0, degenerate: true });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| HarnessError::Stats(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest { t, p_value: (p * num_comparisons.max(1) as f64).min(1.0), degenerate: false })
}
