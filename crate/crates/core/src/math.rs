//! Scalar numerics shared by the likelihood code.
//!
//! `ln` and `exp` use the platform routines when `std` is enabled and `libm`
//! otherwise; the rest goes through `libm`.

use alloc::vec::Vec;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn ln(x: f64) -> f64 {
    #[cfg(feature = "std")]
    return x.ln();
    #[cfg(not(feature = "std"))]
    return libm::log(x);
}

#[inline]
pub fn exp(x: f64) -> f64 {
    #[cfg(feature = "std")]
    return x.exp();
    #[cfg(not(feature = "std"))]
    return libm::exp(x);
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(exp(-x))
    } else {
        libm::log1p(exp(x))
    }
}

/// `log(sum(exp(xs)))`; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum)
}

/// `x * ln(p)` with the convention `0 * ln(0) = 0`.
#[inline]
pub fn xlogy(x: f64, ln_p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln_p
    }
}

/// Exponentiates log-weights in place after subtracting their maximum and
/// normalizes them to sum to one. Returns the log normalizer, or `-inf` if
/// every weight is `-inf` (the slice is then left as zeros).
pub fn normalize_log_weights(ws: &mut [f64]) -> f64 {
    let max = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        ws.iter_mut().for_each(|w| *w = 0.0);
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for w in ws.iter_mut() {
        *w = exp(*w - max);
        total += *w;
    }
    for w in ws.iter_mut() {
        *w /= total;
    }
    max + ln(total)
}

/// Table of `ln(k!)` for `k = 0..=n`, built by summation so small arguments
/// are exact to rounding.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 1..=n {
            acc += ln(k as f64);
            table.push(acc);
        }
        Self { table }
    }

    pub fn max_n(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// `ln C(n, k)` via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log binomial mass `ln Bin(k; n, p)`, exact at the `p = 0` and `p = 1`
/// boundaries.
pub fn ln_binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, k) + k as f64 * ln(p) + (n - k) as f64 * libm::log1p(-p)
}

/// Precomputed logs of an error-rate pair so inner loops avoid `ln` calls.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LnRate {
    pub ln_p: f64,
    pub ln_1mp: f64,
    pub zero: bool,
    pub one: bool,
}

impl LnRate {
    pub fn new(p: f64) -> Self {
        Self {
            ln_p: ln(p),
            ln_1mp: libm::log1p(-p),
            zero: p <= 0.0,
            one: p >= 1.0,
        }
    }

    /// `ln(p^k (1-p)^(n-k))` without the binomial coefficient.
    #[inline]
    pub fn ln_kernel(&self, k: usize, n: usize) -> f64 {
        if self.zero {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if self.one {
            return if k == n { 0.0 } else { f64::NEG_INFINITY };
        }
        k as f64 * self.ln_p + (n - k) as f64 * self.ln_1mp
    }
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], prob: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
