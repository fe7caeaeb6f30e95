//! Small Monte Carlo bookkeeping helpers.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Number of joint standard errors separating two independent estimates.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let joint = (self.se * self.se + other.se * other.se).sqrt();
        let diff = (self.value - other.value).abs();
        if joint == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / joint
        }
    }

    /// Number of standard errors separating the estimate from an exact value.
    pub fn z_exact(&self, exact: f64) -> f64 {
        self.z_against(&Estimate { value: exact, se: 0.0, n: 0 })
    }

    /// Standard errors between a binomial frequency and a known probability
    /// `p`, using the null standard error `sqrt(p(1-p)/n)`. Unlike
    /// [`z_exact`](Self::z_exact) this stays finite when no success was seen.
    pub fn z_binomial(&self, p: f64) -> f64 {
        let se = (p * (1.0 - p) / self.n as f64).sqrt();
        let diff = (self.value - p).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }

    /// Binomial estimate from a success count.
    pub fn binomial(successes: usize, n: usize) -> Estimate {
        let p = successes as f64 / n as f64;
        Estimate { value: p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n == 0 { 0.0 } else { (self.variance() / self.n as f64).sqrt() };
        Estimate { value: self.mean, se, n: self.n }
    }
}

/// Sample mean of nonnegative values given through their logarithms.
///
/// Values are rescaled by the largest one before summing, so the mean stays
/// representable even when every value underflows `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogMean {
    pub log_mean: f64,
    /// Standard error divided by the mean.
    pub rel_se: f64,
    /// Kish effective sample size `(Σx)² / Σx²`.
    pub ess: f64,
    pub n: usize,
}

impl LogMean {
    pub fn from_logs(logs: &[f64]) -> LogMean {
        let n = logs.len();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n == 0 || top == f64::NEG_INFINITY {
            return LogMean { log_mean: f64::NEG_INFINITY, rel_se: 0.0, ess: 0.0, n };
        }
        let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mut acc = Running::default();
        let mut sq = 0.0;
        for &x in &scaled {
            acc.push(x);
            sq += x * x;
        }
        let est = acc.estimate();
        let sum = est.value * n as f64;
        LogMean { log_mean: top + est.value.ln(), rel_se: est.se / est.value, ess: sum * sum / sq, n }
    }

    pub fn value(&self) -> f64 {
        self.log_mean.exp()
    }

    pub fn se(&self) -> f64 {
        self.value() * self.rel_se
    }
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic, `1.6276 / sqrt(n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_matches_direct() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let mut r = Running::default();
        xs.iter().for_each(|&x| r.push(x));
        assert_eq!(r.mean(), 3.5);
        let var = xs.iter().map(|x| (x - 3.5f64).powi(2)).sum::<f64>() / 3.0;
        assert!((r.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn log_mean_matches_direct_mean() {
        let xs = [0.5, 2.0, 1e-3, 0.0, 3.25];
        let logs: Vec<f64> = xs.iter().map(|x: &f64| x.ln()).collect();
        let lm = LogMean::from_logs(&logs);
        let mut r = Running::default();
        xs.iter().for_each(|&x| r.push(x));
        let e = r.estimate();
        assert!((lm.value() - e.value).abs() < 1e-14);
        assert!((lm.se() - e.se).abs() < 1e-14);
        let sum: f64 = xs.iter().sum();
        let sq: f64 = xs.iter().map(|x| x * x).sum();
        assert!((lm.ess - sum * sum / sq).abs() < 1e-12);
        // shifting every log leaves the relative quantities alone
        let shifted: Vec<f64> = logs.iter().map(|l| l - 2000.0).collect();
        let ls = LogMean::from_logs(&shifted);
        assert!((ls.log_mean - (lm.log_mean - 2000.0)).abs() < 1e-10);
        assert!((ls.rel_se - lm.rel_se).abs() < 1e-12);
        assert_eq!(LogMean::from_logs(&[f64::NEG_INFINITY]).log_mean, f64::NEG_INFINITY);
    }

    #[test]
    fn binomial_z_uses_the_null_variance() {
        let none = Estimate::binomial(0, 100_000);
        assert_eq!(none.z_exact(1e-9), f64::INFINITY);
        assert!(none.z_binomial(1e-9) < 0.02);
        let half = Estimate::binomial(510, 1000);
        assert!((half.z_binomial(0.5) - 0.01 / (0.25f64 / 1000.0).sqrt()).abs() < 1e-12);
        assert_eq!(Estimate::binomial(0, 10).z_binomial(0.0), 0.0);
    }

    #[test]
    fn z_scores() {
        let a = Estimate { value: 1.0, se: 0.3, n: 10 };
        let b = Estimate { value: 1.5, se: 0.4, n: 10 };
        assert!((a.z_against(&b) - 1.0).abs() < 1e-12);
        assert_eq!(Estimate::binomial(0, 10).z_exact(0.0), 0.0);
    }

    #[test]
    fn ks_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.005).abs() < 1e-12);
    }
}
