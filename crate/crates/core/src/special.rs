//! Log-domain special functions shared by the likelihood and posterior code.
//!
//! Factorials and gamma values are never materialized; everything is a sum of
//! logarithms or a difference of `ln Γ` values.

/// Products shorter than this are summed term by term instead of via `ln Γ` differences.
const DIRECT_PRODUCT_LIMIT: u64 = 64;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln[n! / (n-m)!]`, the log of the falling factorial `n (n-1) ... (n-m+1)`.
///
/// Returns `-inf` when `m > n`.
pub fn ln_falling(n: u64, m: u64) -> f64 {
    if m > n {
        return f64::NEG_INFINITY;
    }
    if m <= DIRECT_PRODUCT_LIMIT {
        (0..m).map(|i| ((n - i) as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0) - ln_gamma((n - m) as f64 + 1.0)
    }
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    ln_falling(n, k) - ln_factorial(k)
}

/// `ln[x (x+1) ... (x+n-1)] = ln Γ(x+n) - ln Γ(x)` for `x > 0`.
pub fn ln_rising(x: f64, n: u64) -> f64 {
    if n <= DIRECT_PRODUCT_LIMIT {
        (0..n).map(|j| (x + j as f64).ln()).sum()
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln Σ exp(x_i)`, stable for large magnitudes. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + iter.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Running log-sum-exp accumulator for when the terms are produced one by one.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled_sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled_sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled_sum += (v - self.max).exp();
        } else {
            self.scaled_sum = self.scaled_sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled_sum.ln()
        }
    }
}

/// `x ln y` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `x ln(1-y)` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlog1my(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (-y).ln_1p()
    }
}
