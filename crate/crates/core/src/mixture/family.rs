use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exposure::Condition;
use crate::math::{self, LN_2PI};

/// Outcome family without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    Binomial { trials: u32 },
}

/// Conditional outcome distribution given exposure condition `c` and true
/// in-degree `d`, linear in `d` on the mean (Gaussian) or logit scale
/// (binomial). Coefficient arrays are indexed by [`Condition::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OutcomeFamily {
    Gaussian {
        alpha: [f64; 4],
        beta: [f64; 4],
        sigma2: f64,
    },
    Binomial {
        alpha: [f64; 4],
        beta: [f64; 4],
        trials: u32,
    },
}

impl OutcomeFamily {
    pub fn gaussian(alpha: [f64; 4], beta: [f64; 4], sigma2: f64) -> Result<Self> {
        let f = OutcomeFamily::Gaussian { alpha, beta, sigma2 };
        f.validate()?;
        Ok(f)
    }

    pub fn binomial(alpha: [f64; 4], beta: [f64; 4], trials: u32) -> Result<Self> {
        let f = OutcomeFamily::Binomial { alpha, beta, trials };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha().iter().chain(self.beta()).all(|v| v.is_finite());
        if !finite {
            return Err(invalid("family", "coefficients must be finite"));
        }
        match *self {
            OutcomeFamily::Gaussian { sigma2, .. } if !(sigma2 > 0.0 && sigma2.is_finite()) => {
                Err(invalid("sigma2", "must be positive and finite"))
            }
            OutcomeFamily::Binomial { trials: 0, .. } => Err(invalid("trials", "must be positive")),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match *self {
            OutcomeFamily::Gaussian { .. } => FamilyKind::Gaussian,
            OutcomeFamily::Binomial { trials, .. } => FamilyKind::Binomial { trials },
        }
    }

    pub fn alpha(&self) -> &[f64; 4] {
        match self {
            OutcomeFamily::Gaussian { alpha, .. } | OutcomeFamily::Binomial { alpha, .. } => alpha,
        }
    }

    pub fn beta(&self) -> &[f64; 4] {
        match self {
            OutcomeFamily::Gaussian { beta, .. } | OutcomeFamily::Binomial { beta, .. } => beta,
        }
    }

    pub(crate) fn coefs_mut(&mut self) -> (&mut [f64; 4], &mut [f64; 4]) {
        match self {
            OutcomeFamily::Gaussian { alpha, beta, .. } | OutcomeFamily::Binomial { alpha, beta, .. } => (alpha, beta),
        }
    }

    /// Linear predictor `alpha_c + beta_c d`.
    #[inline]
    pub fn linear(&self, c: Condition, d: f64) -> f64 {
        self.alpha()[c.index()] + self.beta()[c.index()] * d
    }

    /// `E[y | c, d]`.
    pub fn mean(&self, c: Condition, d: f64) -> f64 {
        match *self {
            OutcomeFamily::Gaussian { .. } => self.linear(c, d),
            OutcomeFamily::Binomial { trials, .. } => trials as f64 * math::logistic(self.linear(c, d)),
        }
    }

    /// Log density (Gaussian) or log mass (binomial) of `y`. Binomial
    /// outcomes outside `{0, ..., m}` have mass zero.
    pub fn ln_density(&self, y: f64, c: Condition, d: f64) -> f64 {
        self.ln_density_of(y)(c, d)
    }

    /// [`Self::ln_density`] for a fixed `y`, with the terms that do not
    /// depend on `(c, d)` computed once.
    pub(crate) fn ln_density_of(&self, y: f64) -> impl Fn(Condition, f64) -> f64 + '_ {
        let constant = match *self {
            OutcomeFamily::Gaussian { sigma2, .. } => -0.5 * (LN_2PI + math::ln(sigma2)),
            OutcomeFamily::Binomial { trials, .. } => {
                if !(0.0..=trials as f64).contains(&y) || libm::trunc(y) != y {
                    f64::NEG_INFINITY
                } else {
                    math::ln_choose(trials as u64, y as u64)
                }
            }
        };
        move |c, d| {
            let eta = self.linear(c, d);
            match *self {
                OutcomeFamily::Gaussian { sigma2, .. } => {
                    let r = y - eta;
                    constant - r * r / (2.0 * sigma2)
                }
                OutcomeFamily::Binomial { trials, .. } => {
                    if constant == f64::NEG_INFINITY {
                        return constant;
                    }
                    constant - y * math::softplus(-eta) - (trials as f64 - y) * math::softplus(eta)
                }
            }
        }
    }

    pub fn density(&self, y: f64, c: Condition, d: f64) -> f64 {
        math::exp(self.ln_density(y, c, d))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, c: Condition, d: f64) -> f64 {
        let eta = self.linear(c, d);
        match *self {
            OutcomeFamily::Gaussian { sigma2, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                eta + math::sqrt(sigma2) * z
            }
            OutcomeFamily::Binomial { trials, .. } => {
                let prob = math::logistic(eta);
                // Valid for every prob in [0, 1].
                Binomial::new(trials as u64, prob)
                    .map(|b| b.sample(rng) as f64)
                    .unwrap_or(0.0)
            }
        }
    }
}
