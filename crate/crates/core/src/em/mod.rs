//! Maximum-likelihood fitting of the mixture model by EM.

mod accel;
mod bootstrap;
pub mod mstep;
pub mod rates;

pub use bootstrap::{parametric_bootstrap, simulate_outcomes, BootstrapSummary};
pub use mstep::{hard_fit, m_step_binomial, m_step_gaussian, BinomialStep, GaussianStep};
pub use rates::{m_step_rates, rate_objective_gradient, RateBounds, RateMode, RateStep};

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exposure::Condition;
use crate::graph::ErrorRates;
use crate::math;
use crate::mixture::{FamilyKind, MismeasureParams, Mixture, ModelParams, OutcomeFamily, PosteriorRow, PosteriorTable};
use crate::rng::{derive_seed, rng_from_seed};

/// Subjects entering the plug-in mean estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanPopulation {
    /// Every subject, weighted by its full degree posterior.
    #[default]
    All,
    /// Degree posteriors restricted to `d >= 1`, matching the
    /// Horvitz-Thompson exclusion of isolated subjects.
    PositiveDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub family: FamilyKind,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Also requires the largest parameter change of the final update to
    /// fall below this value before declaring convergence. Rates are
    /// measured on the logit scale and the Gaussian variance on the log
    /// scale.
    pub param_tol: Option<f64>,
    pub n_starts: usize,
    pub seed: u64,
    pub rate_bounds: RateBounds,
    pub rate_mode: RateMode,
    pub population: MeanPopulation,
    /// Replaces the naive first start.
    pub init: Option<ModelParams>,
    /// Tries a squared-extrapolation jump after every two EM updates, kept
    /// only when it raises the log-likelihood further.
    pub accelerate: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Gaussian,
            max_iters: 500,
            rel_tol: 1e-8,
            param_tol: None,
            n_starts: 10,
            seed: 0,
            rate_bounds: RateBounds::default(),
            rate_mode: RateMode::Free,
            population: MeanPopulation::All,
            init: None,
            accelerate: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(invalid("rel_tol", "must be positive"));
        }
        if self.param_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("param_tol", "must be positive"));
        }
        if self.n_starts < 1 {
            return Err(invalid("n_starts", "must be at least 1"));
        }
        if let FamilyKind::Binomial { trials: 0 } = self.family {
            return Err(invalid("trials", "must be positive"));
        }
        self.rate_bounds.validate()
    }
}

/// Treatment contrasts between condition means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrasts {
    /// Own treatment without treated in-neighbors, against no exposure.
    pub direct: f64,
    /// At least one treated in-neighbor while untreated, against no exposure.
    pub network_intensive: f64,
    pub interaction: f64,
}

impl Contrasts {
    pub const NAMES: [&'static str; 3] = ["direct", "network_intensive", "interaction"];

    pub fn to_array(&self) -> [f64; 3] {
        [self.direct, self.network_intensive, self.interaction]
    }
}

pub fn contrasts(means: &[f64; 4]) -> Contrasts {
    let [m0, mi, md, mf] = *means;
    Contrasts {
        direct: md - m0,
        network_intensive: mi - m0,
        interaction: m0 + mf - mi - md,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood: f64,
    /// Log-likelihood before each M-step of the winning start.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub best_start: usize,
    /// Final log-likelihood of every start; `None` for failed starts.
    pub start_log_likelihoods: Vec<Option<f64>>,
    pub means: [f64; 4],
    pub contrasts: Contrasts,
    /// Rate M-steps that kept the previous rates for lack of convergence.
    pub rate_step_failures: usize,
    /// A logistic coefficient ended on its bound.
    pub separation: bool,
    #[serde(skip)]
    pub responsibilities: PosteriorTable,
}

/// E-step output.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub gamma: Vec<PosteriorRow>,
    pub log_likelihood: f64,
}

/// Responsibilities `gamma_i(c, d) ∝ tau_i(c, d) f(y_i; c, d)` and the
/// log-likelihood at `params`.
pub fn e_step(mix: &Mixture, params: &ModelParams) -> Result<EStep> {
    let rows = crate::mixture::ln_rows(&mix.key_rows(&params.mismeasure)?);
    e_step_rows(mix, &rows, &params.family)
}

/// `ln tau` rows per key for the most recent error rates, so chains with
/// fixed rates build them once.
#[derive(Default)]
struct LnTauCache {
    rates: Option<MismeasureParams>,
    rows: Vec<PosteriorRow>,
}

impl LnTauCache {
    fn e_step(&mut self, mix: &Mixture, params: &ModelParams) -> Result<EStep> {
        if self.rates != Some(params.mismeasure) {
            self.rows = crate::mixture::ln_rows(&mix.key_rows(&params.mismeasure)?);
            self.rates = Some(params.mismeasure);
        }
        e_step_rows(mix, &self.rows, &params.family)
    }
}

fn e_step_rows(mix: &Mixture, key_rows: &[PosteriorRow], family: &OutcomeFamily) -> Result<EStep> {
    let mut gamma = Vec::with_capacity(mix.n_subjects());
    let mut total = 0.0;
    for (i, &y) in mix.data().outcomes().iter().enumerate() {
        let (mut w, ll) = crate::mixture::joint_log_weights(&key_rows[mix.key_of(i)], family, y);
        if !ll.is_finite() {
            return Err(Error::Underflow(i));
        }
        w.unexposed
            .iter_mut()
            .chain(w.exposed.iter_mut())
            .for_each(|v| *v = math::exp(*v - ll));
        total += ll;
        gamma.push(w);
    }
    Ok(EStep {
        gamma,
        log_likelihood: total,
    })
}

/// Plug-in condition means: each subject's posterior over true degree,
/// given the observed network and treatments, times the family mean at
/// `(c, d)`, averaged over subjects.
pub fn estimate_means(mix: &Mixture, params: &ModelParams, population: MeanPopulation) -> Result<[f64; 4]> {
    let rows = mix.key_rows(&params.mismeasure)?;
    let mut counts = alloc::vec![0usize; rows.len()];
    for i in 0..mix.n_subjects() {
        counts[mix.key_of(i)] += 1;
    }
    let first = match population {
        MeanPopulation::All => 0,
        MeanPopulation::PositiveDegree => 1,
    };
    let mut sums = [0.0; 4];
    let mut mass = 0.0;
    for (row, &n) in rows.iter().zip(&counts) {
        let marginal = row.degree_marginal();
        for (d, &w) in marginal.iter().enumerate().skip(first) {
            let w = w * n as f64;
            if w == 0.0 {
                continue;
            }
            mass += w;
            for c in Condition::ALL {
                sums[c.index()] += w * params.family.mean(c, d as f64);
            }
        }
    }
    if !(mass > 0.0) {
        return Err(invalid("population", "no posterior mass on the requested degrees"));
    }
    Ok(sums.map(|s| s / mass))
}

struct Chain {
    params: ModelParams,
    trace: Vec<f64>,
    converged: bool,
    gamma: Vec<PosteriorRow>,
    stats: ChainStats,
}

#[derive(Debug, Clone, Copy, Default)]
struct ChainStats {
    rate_failures: usize,
    separation: bool,
}

/// M-step. With `tentative`, gives up (`Ok(None)`) rather than fall back to
/// the slow rate search.
fn m_step(
    mix: &Mixture,
    estep: &EStep,
    params: &ModelParams,
    config: &FitConfig,
    stats: &mut ChainStats,
    tentative: bool,
) -> Result<Option<ModelParams>> {
    let y = mix.data().outcomes();
    let family = match params.family {
        OutcomeFamily::Gaussian { .. } => {
            let s = m_step_gaussian(&estep.gamma, y, Some(&params.family))?;
            OutcomeFamily::gaussian(s.alpha, s.beta, mstep::sigma2_floor(s.sigma2, y))?
        }
        OutcomeFamily::Binomial { trials, .. } => {
            let s = m_step_binomial(&estep.gamma, y, trials, Some(&params.family))?;
            stats.separation |= s.separated.iter().any(|&v| v);
            OutcomeFamily::binomial(s.alpha, s.beta, trials)?
        }
    };
    if let RateMode::Fixed { rates } = config.rate_mode {
        return Ok(Some(ModelParams {
            family,
            mismeasure: rates,
        }));
    }
    let gamma_by_key = mix.aggregate_by_key(&estep.gamma);
    let Some(step) = rates::rate_search(
        mix,
        &gamma_by_key,
        &params.mismeasure,
        &config.rate_bounds,
        &config.rate_mode,
        !tentative,
    ) else {
        return Ok(None);
    };
    if !step.converged {
        stats.rate_failures += 1;
    }
    Ok(Some(ModelParams {
        family,
        mismeasure: step.params,
    }))
}

/// One EM update: M-step from `estep`, then the E-step at the new parameters.
fn em_update(
    mix: &Mixture,
    estep: &EStep,
    params: &ModelParams,
    config: &FitConfig,
    stats: &mut ChainStats,
    cache: &mut LnTauCache,
) -> Result<(ModelParams, EStep)> {
    let next = m_step(mix, estep, params, config, stats, false)?.expect("full M-step always answers");
    let estep = cache.e_step(mix, &next)?;
    Ok((next, estep))
}

/// Extrapolates from three iterates and applies one EM update there.
/// `None` unless the result beats `ll_plain`.
fn accelerated_update(
    mix: &Mixture,
    iterates: [&ModelParams; 3],
    ll_plain: f64,
    config: &FitConfig,
    stats: &ChainStats,
    cache: &mut LnTauCache,
) -> Option<(ModelParams, EStep, ChainStats)> {
    let [p0, p1, p2] = iterates;
    let path = accel::Extrapolation::new(p0, p1, p2, &config.rate_bounds, &config.rate_mode)?;
    let jump = path.at(path.step)?;
    let estep = cache.e_step(mix, &jump).ok()?;
    let mut trial = *stats;
    let next = m_step(mix, &estep, &jump, config, &mut trial, true).ok()??;
    let next_estep = cache.e_step(mix, &next).ok()?;
    (next_estep.log_likelihood > ll_plain).then_some((next, next_estep, trial))
}

fn run_chain(mix: &Mixture, start: ModelParams, config: &FitConfig) -> Result<Chain> {
    let mut params = start;
    let mut stats = ChainStats::default();
    let mut cache = LnTauCache::default();
    let mut estep = cache.e_step(mix, &params)?;
    let mut trace = alloc::vec![estep.log_likelihood];
    let stalled = |prev: f64, cur: f64| (cur - prev).abs() <= config.rel_tol * prev.abs().max(1e-300);
    // Parameters two plain updates back, for extrapolation.
    let mut history: Option<ModelParams> = None;
    let mut converged = false;
    while trace.len() <= config.max_iters {
        let (next, next_estep) = em_update(mix, &estep, &params, config, &mut stats, &mut cache)?;
        let prev_ll = estep.log_likelihood;
        trace.push(next_estep.log_likelihood);
        let previous = core::mem::replace(&mut params, next);
        estep = next_estep;
        let settled = config
            .param_tol
            .is_none_or(|t| accel::max_change(&previous, &params, &config.rate_bounds, &config.rate_mode) <= t);
        if settled && stalled(prev_ll, estep.log_likelihood) {
            converged = true;
            break;
        }
        if !config.accelerate {
            continue;
        }
        match history.take() {
            None => history = Some(previous),
            Some(p0) => {
                if trace.len() > config.max_iters {
                    break;
                }
                let iterates = [&p0, &previous, &params];
                if let Some((p, e, s)) =
                    accelerated_update(mix, iterates, estep.log_likelihood, config, &stats, &mut cache)
                {
                    trace.push(e.log_likelihood);
                    params = p;
                    estep = e;
                    stats = s;
                }
            }
        }
    }
    Ok(Chain {
        params,
        trace,
        converged,
        gamma: estep.gamma,
        stats,
    })
}

/// The first start: the fit that treats the observed network as true, with
/// small error rates (or the configured initial value).
pub fn naive_start(mix: &Mixture, config: &FitConfig) -> Result<ModelParams> {
    if let Some(init) = config.init {
        return Ok(init);
    }
    let data = mix.data();
    let family = hard_fit(
        config.family,
        &data.observed_conditions(),
        &data.observed_degrees(),
        data.outcomes(),
    )?;
    let mismeasure = match config.rate_mode {
        RateMode::Fixed { rates } => rates,
        _ => {
            let b = &config.rate_bounds;
            let p = 0.05f64.clamp(b.lower, b.upper);
            let q = (0.05 * data.observed_density()).clamp(b.lower, b.upper);
            if data.is_stratified() && config.rate_mode == RateMode::Free {
                let r = ErrorRates { p, q };
                MismeasureParams::stratified(r, r)?
            } else {
                MismeasureParams::new(p, q)?
            }
        }
    };
    Ok(ModelParams { family, mismeasure })
}

fn perturbed_start(base: &ModelParams, config: &FitConfig, mix: &Mixture, seed: u64) -> Result<ModelParams> {
    let mut rng = rng_from_seed(seed);
    let mut family = base.family;
    {
        let (alpha, beta) = family.coefs_mut();
        for v in alpha.iter_mut().chain(beta.iter_mut()) {
            *v *= rng.random_range(0.8..1.2);
        }
    }
    if let OutcomeFamily::Gaussian { sigma2, .. } = &mut family {
        *sigma2 *= rng.random_range(0.8..1.2);
    }
    let b = &config.rate_bounds;
    let lo_q = math::ln(b.lower.max(1e-12));
    let hi_q = math::ln(b.upper);
    let mut draw = || ErrorRates {
        p: rng.random_range(b.lower..b.upper),
        q: math::exp(rng.random_range(lo_q..hi_q)).clamp(b.lower, b.upper),
    };
    let mismeasure = match config.rate_mode {
        RateMode::Fixed { rates } => rates,
        RateMode::Free if mix.data().is_stratified() => {
            let w = draw();
            let bt = draw();
            MismeasureParams::stratified(w, bt)?
        }
        _ => {
            let r = draw();
            MismeasureParams::new(r.p, r.q)?
        }
    };
    Ok(ModelParams { family, mismeasure })
}

/// Runs EM from `n_starts` initializations and keeps the chain with the
/// highest final log-likelihood.
pub fn fit(mix: &Mixture, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let base = naive_start(mix, config)?;
    let starts: Vec<usize> = (0..config.n_starts).collect();
    let chains = crate::par::map_collect(starts, |s| -> Result<Chain> {
        let start = if s == 0 {
            base
        } else {
            perturbed_start(&base, config, mix, derive_seed(config.seed, s as u64))?
        };
        run_chain(mix, start, config)
    });
    let start_log_likelihoods: Vec<Option<f64>> = chains
        .iter()
        .map(|c| c.as_ref().ok().and_then(|c| c.trace.last().copied()))
        .collect();
    let mut best: Option<(usize, Chain)> = None;
    let mut last_err = None;
    for (s, chain) in chains.into_iter().enumerate() {
        match chain {
            Ok(c) => {
                let ll = *c.trace.last().expect("trace is nonempty");
                if best.as_ref().is_none_or(|(_, b)| ll > *b.trace.last().unwrap()) {
                    best = Some((s, c));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((best_start, chain)) = best else {
        let msg = last_err.map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::AllStartsFailed(config.n_starts, msg));
    };
    let means = estimate_means(mix, &chain.params, config.population)?;
    Ok(FitResult {
        params: chain.params,
        log_likelihood: *chain.trace.last().unwrap(),
        iterations: chain.trace.len() - 1,
        loglik_trace: chain.trace,
        converged: chain.converged,
        best_start,
        start_log_likelihoods,
        means,
        contrasts: contrasts(&means),
        rate_step_failures: chain.stats.rate_failures,
        separation: chain.stats.separation,
        responsibilities: PosteriorTable { rows: chain.gamma },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contrast_examples() {
        let c = contrasts(&[0.5, 0.7, 0.9, 1.0]);
        assert!((c.direct - 0.4).abs() < 1e-15);
        assert!((c.network_intensive - 0.2).abs() < 1e-15);
        assert!((c.interaction + 0.1).abs() < 1e-15);
        assert_eq!(contrasts(&[2.0; 4]).to_array(), [0.0; 3]);
        assert_eq!(contrasts(&[1.0, 1.5, 3.0, 3.5]).interaction, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            n_starts: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
