//! Small statistical helpers: confidence intervals and exact binomial tails.

use serde::{Deserialize, Serialize};

/// Two-sided standard normal quantile for 95% coverage.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Two-sided standard normal quantile for 99% coverage.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, z: f64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
    }
}

/// Normal-approximation interval for a sample mean.
pub fn normal_mean_interval(values: &[f64], z: f64) -> Interval {
    let n = values.len();
    if n == 0 {
        return Interval { lo: f64::NAN, hi: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Interval { lo: mean, hi: mean };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = z * (var / n as f64).sqrt();
    Interval {
        lo: mean - half,
        hi: mean + half,
    }
}

fn ln_binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Exact `P[X >= t]` for `X ~ Binom(n, p)`, `t` real.
pub fn binom_upper_tail(n: u64, p: f64, t: f64) -> f64 {
    let start = t.ceil().max(0.0);
    if start > n as f64 {
        return 0.0;
    }
    (start as u64..=n).map(|k| ln_binom_pmf(n, k, p).exp()).sum::<f64>().min(1.0)
}

/// Exact `P[X <= t]` for `X ~ Binom(n, p)`, `t` real.
pub fn binom_lower_tail(n: u64, p: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let end = (t.floor() as u64).min(n);
    (0..=end).map(|k| ln_binom_pmf(n, k, p).exp()).sum::<f64>().min(1.0)
}

/// Multiplicative Chernoff bound `P[X >= (1+eta) n p] <= exp(-eta^2 n p / 3)`, `0 <= eta <= 1`.
pub fn binom_chernoff_upper(n: u64, p: f64, eta: f64) -> f64 {
    (-eta * eta * n as f64 * p / 3.0).exp()
}

/// Multiplicative Chernoff bound `P[X <= (1-eta) n p] <= exp(-eta^2 n p / 2)`, `0 <= eta <= 1`.
pub fn binom_chernoff_lower(n: u64, p: f64, eta: f64) -> f64 {
    (-eta * eta * n as f64 * p / 2.0).exp()
}
