//! Small statistics helpers for Monte Carlo summaries and rate fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares line `y = intercept + slope·x` with a two-sided confidence
/// interval on the slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

/// Ordinary least squares with a Student-t interval at `level` (e.g. 0.95).
/// With exactly two points the interval is degenerate (zero width).
pub fn ols_slope(x: &[f64], y: &[f64], level: f64) -> Result<SlopeFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Shape(format!("{} abscissae, {} ordinates", n, y.len())));
    }
    if n < 2 {
        return Err(Error::Domain("a slope needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (stderr, half) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let stderr = (rss / (n - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64)
            .map_err(|e| Error::Domain(e.to_string()))?
            .inverse_cdf(0.5 + 0.5 * level);
        (stderr, t * stderr)
    } else {
        (0.0, 0.0)
    };
    Ok(SlopeFit { slope, intercept, stderr, ci_low: slope - half, ci_high: slope + half, points: n })
}

/// OLS of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64], level: f64) -> Result<SlopeFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn exact_power_law_has_zero_width_interval() {
        let x = [64.0, 128.0, 256.0, 512.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-5.0 / 3.0)).collect();
        let fit = loglog_slope(&x, &y, 0.95).unwrap();
        assert_abs_diff_eq!(fit.slope, -5.0 / 3.0, epsilon = 1e-12);
        assert!(fit.ci_high - fit.ci_low < 1e-10);
        assert!(fit.excludes_zero());
    }

    #[test]
    fn interval_matches_t_quantile() {
        // sxx = 5, sxy = 3, rss = 3.2
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 0.0, 3.0, 2.0];
        let fit = ols_slope(&x, &y, 0.95).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.stderr, 0.32f64.sqrt(), epsilon = 1e-12);
        // t_{0.975, 2} = 4.302652729911275
        assert_abs_diff_eq!(fit.ci_high - fit.slope, 4.302652729911275 * fit.stderr, epsilon = 1e-9);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(ols_slope(&[1.0], &[1.0], 0.95).is_err());
        assert!(ols_slope(&[1.0, 1.0], &[1.0, 2.0], 0.95).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0], 0.95).is_err());
    }
}
