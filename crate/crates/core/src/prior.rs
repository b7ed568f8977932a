//! Beta-binomial prior over latent degrees.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{exp, ln, log_sum_exp};

/// Beta-binomial distribution with mean success probability `mu`,
/// overdispersion `rho` and `size` trials. Its variance is
/// `size * mu * (1 - mu) * (1 + (size - 1) * rho)`; `rho = 0` is the binomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomialPrior {
    mu: f64,
    rho: f64,
    size: usize,
}

impl BetaBinomialPrior {
    pub fn new(mu: f64, rho: f64, size: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(invalid("mu", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(invalid("rho", "must lie in [0, 1)"));
        }
        Ok(Self { mu, rho, size })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Same `(mu, rho)` over a different number of trials.
    pub fn with_size(&self, size: usize) -> Self {
        Self { size, ..*self }
    }

    /// Shape parameters `(a, b)` of the mixing beta distribution, or `None`
    /// when the prior is degenerate in the propensity (`rho = 0` or
    /// `mu` at a boundary).
    pub fn beta_shapes(&self) -> Option<(f64, f64)> {
        if self.rho == 0.0 || self.mu == 0.0 || self.mu == 1.0 {
            return None;
        }
        let scale = (1.0 - self.rho) / self.rho;
        Some((self.mu * scale, (1.0 - self.mu) * scale))
    }

    pub fn mean(&self) -> f64 {
        self.size as f64 * self.mu
    }

    pub fn variance(&self) -> f64 {
        let n = self.size as f64;
        n * self.mu * (1.0 - self.mu) * (1.0 + (n - 1.0) * self.rho)
    }

    /// Log mass for every `k` in `0..=size`.
    ///
    /// Consecutive terms have ratio `(n - k) / (k + 1)` times
    /// `(mu (1 - rho) + k rho) / ((1 - mu) (1 - rho) + (n - k - 1) rho)`,
    /// which stays finite at `rho = 0`. Log ratios are accumulated outward
    /// from the mean and the table is normalized by its log-sum-exp, so the
    /// rounding error stays near machine precision for large `size`.
    pub fn ln_pmf_table(&self) -> Vec<f64> {
        let n = self.size;
        let (mu, rho) = (self.mu, self.rho);
        let mut out = vec![f64::NEG_INFINITY; n + 1];
        if mu == 0.0 {
            out[0] = 0.0;
            return out;
        }
        if mu == 1.0 {
            out[n] = 0.0;
            return out;
        }
        // ln p(k + 1) - ln p(k)
        let ln_ratio = |k: usize| {
            let up = (n - k) as f64 * (mu * (1.0 - rho) + k as f64 * rho);
            let down = (k + 1) as f64 * ((1.0 - mu) * (1.0 - rho) + (n - k - 1) as f64 * rho);
            ln(up / down)
        };
        let k0 = (libm::round(n as f64 * mu) as usize).min(n);
        out[k0] = 0.0;
        for k in k0..n {
            out[k + 1] = out[k] + ln_ratio(k);
        }
        for k in (0..k0).rev() {
            out[k] = out[k + 1] - ln_ratio(k);
        }
        let z = log_sum_exp(&out);
        out.iter_mut().for_each(|v| *v -= z);
        out
    }

    pub fn pmf_table(&self) -> Vec<f64> {
        self.ln_pmf_table().into_iter().map(exp).collect()
    }

    /// Probability mass at `k`; zero outside `0..=size`.
    pub fn pmf(&self, k: i64) -> f64 {
        if k < 0 || k as usize > self.size {
            return 0.0;
        }
        exp(self.ln_pmf_table()[k as usize])
    }

    /// Smallest `d_max` whose upper tail `P(D > d_max)` is at most `tail_mass`.
    pub fn truncated_support(&self, tail_mass: f64) -> Result<usize> {
        if !(tail_mass > 0.0 && tail_mass <= 0.01) {
            return Err(invalid("tail_mass", "must lie in (0, 0.01]"));
        }
        Ok(support_bound(&self.pmf_table(), tail_mass))
    }
}

/// Smallest index whose strict upper tail in `pmf` is at most `tail_mass`.
/// Tails are accumulated from the top so tiny masses are not lost to rounding.
pub(crate) fn support_bound(pmf: &[f64], tail_mass: f64) -> usize {
    let mut upper = 0.0;
    for d in (0..pmf.len()).rev() {
        // `upper` is P(D > d) here.
        if upper + pmf[d] > tail_mass {
            return d;
        }
        upper += pmf[d];
    }
    0
}

/// Result of [`moment_match`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentMatch {
    pub prior: BetaBinomialPrior,
    /// The sample variance fell below the binomial variance and `rho` was
    /// clamped to zero.
    pub underdispersed: bool,
}

const RHO_MAX: f64 = 1.0 - 1e-9;

/// Calibrates a prior with `size` trials to observed degrees. `mu` is the
/// override when given, else `mean / size`; `rho` is solved so the prior
/// variance equals the sample variance, clamped to `[0, 1)`.
pub fn moment_match(degrees: &[usize], size: usize, mu_override: Option<f64>) -> Result<MomentMatch> {
    if degrees.is_empty() {
        return Err(invalid("degrees", "must be nonempty"));
    }
    if size == 0 {
        return Err(invalid("size", "must be positive"));
    }
    let xs: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    let n = size as f64;
    let mu = match mu_override {
        Some(m) => m,
        None => (crate::math::mean(&xs) / n).clamp(0.0, 1.0),
    };
    let var = crate::math::sample_variance(&xs);
    let binom_var = n * mu * (1.0 - mu);
    let (rho, underdispersed) = if size < 2 || binom_var <= 0.0 {
        (0.0, false)
    } else {
        let r = (var / binom_var - 1.0) / (n - 1.0);
        if r < 0.0 {
            (0.0, true)
        } else {
            (r.min(RHO_MAX), false)
        }
    };
    Ok(MomentMatch {
        prior: BetaBinomialPrior::new(mu, rho, size)?,
        underdispersed,
    })
}
