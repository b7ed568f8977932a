use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{fit, FitConfig, FitResult};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mixture::{Mixture, ModelParams, PosteriorRow};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Monte Carlo spread of the mean and contrast estimates across bootstrap
/// replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub failed: usize,
    pub means_se: [f64; 4],
    pub contrasts_se: [f64; 3],
    /// 5% and 95% percentiles.
    pub means_ci: [[f64; 2]; 4],
    pub contrasts_ci: [[f64; 2]; 3],
    /// Means then contrasts, one entry per successful replicate.
    pub estimates: Vec<[f64; 7]>,
}

const MAX_FAILURE_RATE: f64 = 0.2;

/// Draws one (condition, degree) cell from a posterior row and returns it as
/// `(indirect, degree)`.
fn draw_cell(row: &PosteriorRow, rng: &mut Rng) -> (bool, usize) {
    let u: f64 = rng.random::<f64>() * row.total();
    let mut acc = 0.0;
    let mut last = (false, 0);
    for indirect in [false, true] {
        for (d, &w) in row.arm(indirect).iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = (indirect, d);
                if u < acc {
                    return last;
                }
            }
        }
    }
    last
}

/// Simulates outcomes from `params` holding treatments and the observed
/// network fixed: latent (condition, degree) from the posterior given the
/// network, then `y` from the outcome family.
pub fn simulate_outcomes(mix: &Mixture, params: &ModelParams, seed: u64) -> Result<Vec<f64>> {
    let table = mix.tau(&params.mismeasure)?;
    let mut rng = rng_from_seed(seed);
    Ok(table
        .rows
        .iter()
        .map(|row| {
            let (indirect, d) = draw_cell(row, &mut rng);
            params.family.sample(&mut rng, row.condition(indirect), d as f64)
        })
        .collect())
}

/// Parametric bootstrap: `m_reps` outcome vectors simulated from the fit,
/// each refit by EM from a single start at the fitted parameters.
/// Replicates whose fit fails are dropped; more than 20% failures is an error.
pub fn parametric_bootstrap(
    mix: &Mixture,
    fitted: &FitResult,
    config: &FitConfig,
    m_reps: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if m_reps < 2 {
        return Err(invalid("m_reps", "must be at least 2"));
    }
    let rep_config = FitConfig {
        n_starts: 1,
        init: Some(fitted.params),
        ..*config
    };
    let reps: Vec<usize> = (0..m_reps).collect();
    let results = crate::par::map_collect(reps, |r| -> Result<[f64; 7]> {
        let y = simulate_outcomes(mix, &fitted.params, derive_seed(seed, r as u64))?;
        let refit = fit(&mix.with_outcomes(y)?, &rep_config)?;
        let c = refit.contrasts.to_array();
        let m = refit.means;
        Ok([m[0], m[1], m[2], m[3], c[0], c[1], c[2]])
    });
    let estimates: Vec<[f64; 7]> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failed = m_reps - estimates.len();
    if failed as f64 > MAX_FAILURE_RATE * m_reps as f64 || estimates.len() < 2 {
        return Err(Error::BootstrapFailures { failed, total: m_reps });
    }
    let column = |k: usize| -> Vec<f64> { estimates.iter().map(|e| e[k]).collect() };
    let spread = |k: usize| {
        let xs = column(k);
        (
            math::sqrt(math::sample_variance(&xs)),
            [math::quantile(&xs, 0.05), math::quantile(&xs, 0.95)],
        )
    };
    let mut summary = BootstrapSummary {
        replicates: estimates.len(),
        failed,
        means_se: [0.0; 4],
        contrasts_se: [0.0; 3],
        means_ci: [[0.0; 2]; 4],
        contrasts_ci: [[0.0; 2]; 3],
        estimates: Vec::new(),
    };
    for k in 0..4 {
        (summary.means_se[k], summary.means_ci[k]) = spread(k);
    }
    for k in 0..3 {
        (summary.contrasts_se[k], summary.contrasts_ci[k]) = spread(4 + k);
    }
    summary.estimates = estimates;
    Ok(summary)
}
