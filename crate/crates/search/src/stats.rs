//! Confidence intervals.

use serde::{Deserialize, Serialize};

/// 97.5% quantile of the standard normal distribution.
pub const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval { lo: (center - half).max(0.0), hi: (center + half).min(1.0) }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// `mean ± z·se`.
    Normal,
    /// Normal approximation of `ln(mean)` by the delta method:
    /// `mean · exp(±z·se/mean)`. Stays positive for skewed estimates.
    #[default]
    LogNormal,
}

pub fn interval(mean: f64, se: f64, method: CiMethod) -> Interval {
    match method {
        CiMethod::Normal => Interval { lo: mean - Z95 * se, hi: mean + Z95 * se },
        CiMethod::LogNormal => {
            if mean <= 0.0 {
                return Interval { lo: mean - Z95 * se, hi: mean + Z95 * se };
            }
            let f = (Z95 * se / mean).exp();
            Interval { lo: mean / f, hi: mean * f }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 10 successes out of 100.
        let w = wilson(10, 100);
        assert!((w.lo - 0.05522).abs() < 1e-4 && (w.hi - 0.17437).abs() < 1e-4, "{w:?}");
        assert!(wilson(0, 50).lo.abs() < 1e-12);
        assert!(wilson(0, 50).hi > 0.0);
    }

    #[test]
    fn zero_variance_gives_a_point() {
        let (m, se) = mean_se(&[4.0; 10]);
        assert_eq!((m, se), (4.0, 0.0));
        for method in [CiMethod::Normal, CiMethod::LogNormal] {
            assert_eq!(interval(m, se, method), Interval { lo: 4.0, hi: 4.0 });
        }
    }
}
