//! Closed-form and Newton M-steps for the outcome family.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exposure::Condition;
use crate::graph::check_len;
use crate::math::{self, logistic, softplus};
use crate::mixture::{FamilyKind, OutcomeFamily, PosteriorRow};

/// Weighted degree variance below which a condition's slope is set to zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Box on logistic coefficients; hitting it flags separation.
pub const COEF_BOUND: f64 = 20.0;

/// Calls `f(c, d, y, w)` for every positive weight.
fn for_each_weight<F>(gamma: &[PosteriorRow], y: &[f64], mut f: F)
where
    F: FnMut(Condition, f64, f64, f64),
{
    for (row, &yi) in gamma.iter().zip(y) {
        for indirect in [false, true] {
            let c = row.condition(indirect);
            for (d, &w) in row.arm(indirect).iter().enumerate() {
                if w > 0.0 {
                    f(c, d as f64, yi, w);
                }
            }
        }
    }
}

/// Responsibilities of hard assignments: all mass on one (condition, degree).
pub fn hard_responsibilities(conditions: &[Condition], degrees: &[usize]) -> Vec<PosteriorRow> {
    conditions
        .iter()
        .zip(degrees)
        .map(|(&c, &d)| {
            let mut row = PosteriorRow {
                treated: c.treated(),
                unexposed: vec![0.0; d + 1],
                exposed: vec![0.0; d + 1],
            };
            row.arm_mut(c.indirect())[d] = 1.0;
            row
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianStep {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
    /// Pooled residual variance; may be zero on a perfect fit.
    pub sigma2: f64,
    /// Conditions whose slope was set to zero for lack of degree variation.
    pub degenerate: [bool; 4],
    /// Conditions without weight, whose coefficients were carried over.
    pub empty: [bool; 4],
}

/// Weighted least squares per condition over the (subject, degree) grid with
/// a variance pooled over all conditions. `previous` supplies coefficients for
/// conditions carrying no weight (zeros when absent).
pub fn m_step_gaussian(gamma: &[PosteriorRow], y: &[f64], previous: Option<&OutcomeFamily>) -> Result<GaussianStep> {
    check_len("responsibilities", y.len(), gamma.len())?;
    let mut w = [0.0; 4];
    let mut sd = [0.0; 4];
    let mut sy = [0.0; 4];
    for_each_weight(gamma, y, |c, d, yi, wt| {
        let k = c.index();
        w[k] += wt;
        sd[k] += wt * d;
        sy[k] += wt * yi;
    });
    let mut dbar = [0.0; 4];
    let mut ybar = [0.0; 4];
    for k in 0..4 {
        if w[k] > 0.0 {
            dbar[k] = sd[k] / w[k];
            ybar[k] = sy[k] / w[k];
        }
    }
    let mut sdd = [0.0; 4];
    let mut sdy = [0.0; 4];
    for_each_weight(gamma, y, |c, d, yi, wt| {
        let k = c.index();
        let dd = d - dbar[k];
        sdd[k] += wt * dd * dd;
        sdy[k] += wt * dd * (yi - ybar[k]);
    });

    let mut step = GaussianStep {
        alpha: previous.map_or([0.0; 4], |f| *f.alpha()),
        beta: previous.map_or([0.0; 4], |f| *f.beta()),
        sigma2: 0.0,
        degenerate: [false; 4],
        empty: [false; 4],
    };
    for k in 0..4 {
        if w[k] <= 0.0 {
            step.empty[k] = true;
            continue;
        }
        if sdd[k] / w[k] < DEGENERATE_VARIANCE {
            step.degenerate[k] = true;
            step.beta[k] = 0.0;
            step.alpha[k] = ybar[k];
        } else {
            step.beta[k] = sdy[k] / sdd[k];
            step.alpha[k] = ybar[k] - step.beta[k] * dbar[k];
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(invalid("responsibilities", "carry no weight"));
    }
    let mut rss = 0.0;
    for_each_weight(gamma, y, |c, d, yi, wt| {
        let k = c.index();
        let r = yi - step.alpha[k] - step.beta[k] * d;
        rss += wt * r * r;
    });
    step.sigma2 = rss / total;
    Ok(step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialStep {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
    pub degenerate: [bool; 4],
    pub empty: [bool; 4],
    /// Conditions whose coefficients ended on the `COEF_BOUND` box.
    pub separated: [bool; 4],
}

/// Weighted logistic regression of successes out of `trials` on degree, per
/// condition, by damped Newton iterations started from `previous`.
pub fn m_step_binomial(
    gamma: &[PosteriorRow],
    y: &[f64],
    trials: u32,
    previous: Option<&OutcomeFamily>,
) -> Result<BinomialStep> {
    check_len("responsibilities", y.len(), gamma.len())?;
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    let max_d = gamma.iter().map(|r| r.max_degree()).max().unwrap_or(0);
    let mut wt = vec![[0.0; 4]; max_d + 1];
    let mut succ = vec![[0.0; 4]; max_d + 1];
    for_each_weight(gamma, y, |c, d, yi, w| {
        wt[d as usize][c.index()] += w;
        succ[d as usize][c.index()] += w * yi;
    });
    let mut step = BinomialStep {
        alpha: previous.map_or([0.0; 4], |f| *f.alpha()),
        beta: previous.map_or([0.0; 4], |f| *f.beta()),
        degenerate: [false; 4],
        empty: [false; 4],
        separated: [false; 4],
    };
    let m = trials as f64;
    for k in 0..4 {
        let w: Vec<f64> = wt.iter().map(|r| r[k]).collect();
        let s: Vec<f64> = succ.iter().map(|r| r[k]).collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            step.empty[k] = true;
            continue;
        }
        let dbar = w.iter().enumerate().map(|(d, v)| d as f64 * v).sum::<f64>() / total;
        let var = w
            .iter()
            .enumerate()
            .map(|(d, v)| v * (d as f64 - dbar) * (d as f64 - dbar))
            .sum::<f64>()
            / total;
        let fit = if var < DEGENERATE_VARIANCE {
            step.degenerate[k] = true;
            let rate = s.iter().sum::<f64>() / (m * total);
            let a = math::logit(rate).clamp(-COEF_BOUND, COEF_BOUND);
            (a, 0.0)
        } else {
            let start = (
                step.alpha[k].clamp(-COEF_BOUND, COEF_BOUND),
                step.beta[k].clamp(-COEF_BOUND, COEF_BOUND),
            );
            logistic_newton(&w, &s, m, start)
        };
        step.alpha[k] = fit.0;
        step.beta[k] = fit.1;
        step.separated[k] = fit.0.abs() >= COEF_BOUND || fit.1.abs() >= COEF_BOUND;
    }
    Ok(step)
}

/// `sum_d s_d eta_d - m w_d softplus(eta_d)` with `eta_d = a + b d`.
fn logistic_objective(w: &[f64], s: &[f64], m: f64, a: f64, b: f64) -> f64 {
    w.iter()
        .zip(s)
        .enumerate()
        .filter(|(_, (wd, _))| **wd > 0.0)
        .map(|(d, (wd, sd))| {
            let eta = a + b * d as f64;
            sd * eta - m * wd * softplus(eta)
        })
        .sum()
}

fn logistic_newton(w: &[f64], s: &[f64], m: f64, start: (f64, f64)) -> (f64, f64) {
    let (mut a, mut b) = start;
    let mut obj = logistic_objective(w, s, m, a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (d, (&wd, &sd)) in w.iter().zip(s).enumerate() {
            if wd <= 0.0 {
                continue;
            }
            let x = d as f64;
            let pr = logistic(a + b * x);
            let r = sd - m * wd * pr;
            let h = m * wd * pr * (1.0 - pr);
            ga += r;
            gb += r * x;
            haa += h;
            hab += h * x;
            hbb += h * x * x;
        }
        if math::sqrt(ga * ga + gb * gb) < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 1e-300 && det.is_finite() {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let na = (a + t * da).clamp(-COEF_BOUND, COEF_BOUND);
            let nb = (b + t * db).clamp(-COEF_BOUND, COEF_BOUND);
            let nobj = logistic_objective(w, s, m, na, nb);
            if nobj >= obj {
                moved = (na, nb) != (a, b);
                a = na;
                b = nb;
                obj = nobj;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

/// Fits the family with every subject at its given condition and degree.
/// Empty conditions get the overall mean (or rate) and a zero slope.
pub fn hard_fit(kind: FamilyKind, conditions: &[Condition], degrees: &[usize], y: &[f64]) -> Result<OutcomeFamily> {
    check_len("degrees", conditions.len(), degrees.len())?;
    check_len("outcomes", conditions.len(), y.len())?;
    if y.is_empty() {
        return Err(invalid("outcomes", "must be nonempty"));
    }
    let gamma = hard_responsibilities(conditions, degrees);
    let ybar = math::mean(y);
    match kind {
        FamilyKind::Gaussian => {
            let step = m_step_gaussian(&gamma, y, None)?;
            let mut alpha = step.alpha;
            for k in 0..4 {
                if step.empty[k] {
                    alpha[k] = ybar;
                }
            }
            OutcomeFamily::gaussian(alpha, step.beta, sigma2_floor(step.sigma2, y))
        }
        FamilyKind::Binomial { trials } => {
            let step = m_step_binomial(&gamma, y, trials, None)?;
            let mut alpha = step.alpha;
            let base = math::logit(ybar / trials as f64).clamp(-COEF_BOUND, COEF_BOUND);
            for k in 0..4 {
                if step.empty[k] {
                    alpha[k] = base;
                }
            }
            OutcomeFamily::binomial(alpha, step.beta, trials)
        }
    }
}

/// Keeps the pooled variance away from zero so densities stay finite.
pub(crate) fn sigma2_floor(sigma2: f64, y: &[f64]) -> f64 {
    let scale = if y.len() > 1 { math::sample_variance(y) } else { 0.0 };
    let floor = if scale > 0.0 { 1e-10 * scale } else { 1e-10 };
    sigma2.max(floor)
}
