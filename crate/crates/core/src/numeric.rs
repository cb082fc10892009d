//! Small numerical building blocks shared across the crate.

use statrs::function::factorial::ln_factorial;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::iter::Sum;
use std::ops::AddAssign;

/// Compensated (Kahan-Babuska / Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, x: f64) {
        self.add(x);
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().sum::<NeumaierSum>().value()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`, accurate in both tails.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Logistic function without overflow.
#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Table of `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(n: usize) -> Self {
        Self {
            table: (0..=n as u64).map(ln_factorial).collect(),
        }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.table[n] - self.table[k] - self.table[n - k]
        }
    }
}

/// Binomial(n, p) point probabilities for `v = 0..=n`, computed in log space.
pub fn binomial_pmf(n: usize, p: f64, lf: &LogFactorials) -> Vec<f64> {
    assert!(lf.max() >= n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|v| (lf.ln_binomial(n, v) + v as f64 * lp + (n - v) as f64 * lq).exp())
        .collect()
}
