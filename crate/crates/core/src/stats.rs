//! Least-squares fits and Monte Carlo summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::geometry::Site;

/// Ordinary least-squares line through `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval for the slope; infinite with
    /// only two points.
    pub slope_half_width: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let (slope_stderr, slope_half_width) = if n > 2 {
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("dof > 0").inverse_cdf(0.975);
        (se, t * se)
    } else {
        (0.0, f64::INFINITY)
    };
    Some(LinearFit { points: points.to_vec(), slope, intercept, r_squared, slope_stderr, slope_half_width })
}

/// Fraction of successes with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let estimate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let stderr = if trials == 0 { 0.0 } else { (estimate * (1.0 - estimate) / trials as f64).sqrt() };
        Proportion { successes, trials, estimate, stderr }
    }

    /// Associative merge of two independent batches.
    pub fn merge(self, other: Proportion) -> Proportion {
        Proportion::new(self.successes + other.successes, self.trials + other.trials)
    }
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Normalized empirical law of a list of sites.
pub fn empirical(sites: impl IntoIterator<Item = Site>) -> BTreeMap<Site, f64> {
    let mut counts: BTreeMap<Site, f64> = BTreeMap::new();
    let mut total = 0.0;
    for s in sites {
        *counts.entry(s).or_insert(0.0) += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        for v in counts.values_mut() {
            *v /= total;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let f = linear_fit(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_half_width < 1e-9);
    }

    #[test]
    fn degenerate_fits_rejected() {
        assert!(linear_fit(&[(1.0, 2.0)]).is_none());
        assert!(linear_fit(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn t_interval_for_three_points() {
        // residuals -1/3, 2/3, -1/3: sse = 2/3, sxx = 2
        let f = linear_fit(&[(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        let se = ((2.0f64 / 3.0) / 1.0 / 2.0).sqrt();
        assert!((f.slope_stderr - se).abs() < 1e-12);
        // t_{0.975, 1} = 12.706
        assert!((f.slope_half_width / se - 12.7062).abs() < 1e-3);
    }

    #[test]
    fn proportions_merge() {
        let p = Proportion::new(3, 10).merge(Proportion::new(7, 30));
        assert_eq!(p, Proportion::new(10, 40));
        assert!((p.stderr - (0.25f64 * 0.75 / 40.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empirical_normalizes() {
        let law = empirical([Site::new(1, 0), Site::new(1, 0), Site::new(0, 1), Site::new(2, 2)]);
        assert_eq!(law[&Site::new(1, 0)], 0.5);
        assert_eq!(law.values().sum::<f64>(), 1.0);
    }
}
