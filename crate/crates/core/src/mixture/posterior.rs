use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::Condition;
use crate::graph::ErrorRates;
use crate::math::{self, LnFactorials, LnRate};
use crate::prior::{support_bound, BetaBinomialPrior};

/// `ln P(k observed | d true)` for `d` in `0..=u`, where each of the `d` true
/// edges survives with probability `1 - p` and each of the `n - d` non-edges
/// shows up with probability `q`. Sums over the number `x` of dropped edges.
///
/// Consecutive terms in `x` differ by the factor
/// `(d - x)(n - k - x) / ((x + 1)(k - d + x + 1)) * pq / ((1 - p)(1 - q))`,
/// so only the first term per `d` needs logarithms.
pub(crate) fn ln_observation_table(
    n: usize,
    k: usize,
    u: usize,
    p: &LnRate,
    q: &LnRate,
    lf: &LnFactorials,
) -> Vec<f64> {
    let ln_ratio = p.ln_p - p.ln_1mp + q.ln_p - q.ln_1mp;
    let ratio = if p.zero || q.zero { 0.0 } else { math::exp(ln_ratio) };
    (0..=u)
        .map(|d| {
            // x dropped, d - x kept, k - d + x false positives out of n - d.
            let x_lo = d.saturating_sub(k);
            let x_hi = d.min(n - k);
            if x_lo > x_hi {
                return f64::NEG_INFINITY;
            }
            let f_lo = k + x_lo - d;
            let head =
                lf.ln_choose(d, x_lo) + p.ln_kernel(x_lo, d) + lf.ln_choose(n - d, f_lo) + q.ln_kernel(f_lo, n - d);
            if head == f64::NEG_INFINITY || ratio == 0.0 {
                return head;
            }
            head + ln_series(d, n - k, f_lo, x_lo, x_hi, ratio)
        })
        .collect()
}

/// `ln` of the series relative to its first term. The terms are log-concave
/// in `x`, so once they fall and are negligible the rest can be skipped.
fn ln_series(d: usize, n_minus_k: usize, f_lo: usize, lo: usize, hi: usize, ratio: f64) -> f64 {
    const BIG: f64 = 1e150;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut scale = 0.0;
    for (j, x) in (lo..hi).enumerate() {
        let num = ((d - x) * (n_minus_k - x)) as f64;
        let den = ((x + 1) * (f_lo + j + 1)) as f64;
        let factor = ratio * num / den;
        term *= factor;
        sum += term;
        if sum > BIG {
            sum /= BIG;
            term /= BIG;
            scale += math::ln(BIG);
        }
        if factor < 1.0 && term < sum * 1e-18 {
            break;
        }
    }
    scale + math::ln(sum)
}

/// Normalizes `ln prior + ln likelihood` into a probability vector.
pub(crate) fn posterior_from_logs(
    ln_prior: &[f64],
    ln_obs: &[f64],
    observed: usize,
    population: usize,
) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = ln_prior.iter().zip(ln_obs).map(|(a, b)| a + b).collect();
    let norm = math::normalize_log_weights(&mut w);
    if !norm.is_finite() {
        return Err(Error::ImpossibleObservation { observed, population });
    }
    Ok(w)
}

/// Support size used for a count posterior: the truncated prior support
/// widened by the observed count, capped at the population.
pub(crate) fn support_max(prior_pmf: &[f64], observed: usize, tail: Option<f64>) -> usize {
    let n = prior_pmf.len() - 1;
    match tail {
        None => n,
        Some(t) => (support_bound(prior_pmf, t) + observed).min(n),
    }
}

/// Posterior over the true number of in-neighbors within a sub-population of
/// `population` others, given `observed` observed in-edges from it. The prior
/// is `prior` resized to `population` trials. `tail` truncates the prior
/// support (`None` keeps all of `0..=population`).
pub fn count_posterior(
    population: usize,
    observed: usize,
    rates: ErrorRates,
    prior: &BetaBinomialPrior,
    tail: Option<f64>,
) -> Result<Vec<f64>> {
    rates.validate()?;
    if observed > population {
        return Err(Error::CountExceedsPopulation { observed, population });
    }
    let ln_prior = prior.with_size(population).ln_pmf_table();
    let pmf: Vec<f64> = ln_prior.iter().map(|&v| math::exp(v)).collect();
    let u = support_max(&pmf, observed, tail);
    let lf = LnFactorials::new(population);
    let obs = ln_observation_table(
        population,
        observed,
        u,
        &LnRate::new(rates.p),
        &LnRate::new(rates.q),
        &lf,
    );
    posterior_from_logs(&ln_prior[..=u], &obs, observed, population)
}

/// Discrete convolution of two probability vectors.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Posterior over the latent (condition, true in-degree) pair of one subject.
/// Only the two conditions sharing the subject's own treatment carry mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub treated: bool,
    /// Mass without a treated in-neighbor, indexed by degree.
    pub unexposed: Vec<f64>,
    /// Mass with at least one treated in-neighbor, indexed by degree.
    pub exposed: Vec<f64>,
}

impl PosteriorRow {
    pub fn max_degree(&self) -> usize {
        self.unexposed.len() - 1
    }

    pub fn condition(&self, indirect: bool) -> Condition {
        Condition::new(self.treated, indirect)
    }

    /// Mass at `(c, d)`; zero for the other treatment arm or `d` out of range.
    pub fn get(&self, c: Condition, d: usize) -> f64 {
        if c.treated() != self.treated {
            return 0.0;
        }
        let v = if c.indirect() { &self.exposed } else { &self.unexposed };
        v.get(d).copied().unwrap_or(0.0)
    }

    pub fn arm(&self, indirect: bool) -> &[f64] {
        if indirect {
            &self.exposed
        } else {
            &self.unexposed
        }
    }

    pub(crate) fn arm_mut(&mut self, indirect: bool) -> &mut Vec<f64> {
        if indirect {
            &mut self.exposed
        } else {
            &mut self.unexposed
        }
    }

    pub fn total(&self) -> f64 {
        self.unexposed.iter().chain(&self.exposed).sum()
    }

    /// Mass of each condition, indexed by [`Condition::index`].
    pub fn condition_masses(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        out[self.condition(false).index()] = self.unexposed.iter().sum();
        out[self.condition(true).index()] = self.exposed.iter().sum();
        out
    }

    /// Marginal over true in-degree.
    pub fn degree_marginal(&self) -> Vec<f64> {
        self.unexposed.iter().zip(&self.exposed).map(|(a, b)| a + b).collect()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            treated: self.treated,
            unexposed: vec![0.0; self.unexposed.len()],
            exposed: vec![0.0; self.exposed.len()],
        }
    }

    pub(crate) fn add_assign(&mut self, other: &PosteriorRow) {
        for (a, b) in self.unexposed.iter_mut().zip(&other.unexposed) {
            *a += b;
        }
        for (a, b) in self.exposed.iter_mut().zip(&other.exposed) {
            *a += b;
        }
    }
}

/// Combines count posteriors over treated (`treated_post`) and untreated
/// (`untreated_post`) in-neighbors into a posterior over (condition, degree).
/// The unexposed arm is `P_t(0) P_nt(d)`; the exposed arm sums
/// `P_t(d_t) P_nt(d - d_t)` over `d_t >= 1`.
pub fn tau_row(treated: bool, treated_post: &[f64], untreated_post: &[f64]) -> PosteriorRow {
    let len = treated_post.len() + untreated_post.len() - 1;
    let mut unexposed = vec![0.0; len];
    let mut exposed = vec![0.0; len];
    let p0 = treated_post[0];
    for (d, &w) in untreated_post.iter().enumerate() {
        unexposed[d] = p0 * w;
    }
    for (dt, &a) in treated_post.iter().enumerate().skip(1) {
        if a == 0.0 {
            continue;
        }
        for (dn, &b) in untreated_post.iter().enumerate() {
            exposed[dt + dn] += a * b;
        }
    }
    let total: f64 = unexposed.iter().chain(&exposed).sum();
    if total > 0.0 {
        unexposed.iter_mut().chain(exposed.iter_mut()).for_each(|v| *v /= total);
    }
    PosteriorRow {
        treated,
        unexposed,
        exposed,
    }
}
