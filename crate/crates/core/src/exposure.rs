//! Exposure conditions under the local network exposure model, and the
//! estimators that assume the network is measured without error.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{check_len, DirectedGraph};
use crate::math;
use crate::mixture::{FamilyKind, OutcomeFamily};
use crate::rng::rng_from_seed;

/// Own treatment crossed with "at least one treated in-neighbor".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoExposure = 0,
    IndirectExposure = 1,
    DirectExposure = 2,
    FullExposure = 3,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::NoExposure,
        Condition::IndirectExposure,
        Condition::DirectExposure,
        Condition::FullExposure,
    ];

    pub fn new(treated: bool, indirect: bool) -> Self {
        match (treated, indirect) {
            (false, false) => Condition::NoExposure,
            (false, true) => Condition::IndirectExposure,
            (true, false) => Condition::DirectExposure,
            (true, true) => Condition::FullExposure,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn treated(self) -> bool {
        matches!(self, Condition::DirectExposure | Condition::FullExposure)
    }

    pub fn indirect(self) -> bool {
        matches!(self, Condition::IndirectExposure | Condition::FullExposure)
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::NoExposure => "no_exposure",
            Condition::IndirectExposure => "indirect_exposure",
            Condition::DirectExposure => "direct_exposure",
            Condition::FullExposure => "full_exposure",
        }
    }
}

/// Treatment vector, assignment probability and outcomes of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub treatment: Vec<bool>,
    pub assign_prob: f64,
    pub outcomes: Vec<f64>,
}

impl ExperimentDesign {
    pub fn new(treatment: Vec<bool>, assign_prob: f64, outcomes: Vec<f64>) -> Result<Self> {
        check_len("outcomes", treatment.len(), outcomes.len())?;
        if !(assign_prob > 0.0 && assign_prob < 1.0) {
            return Err(invalid("assign_prob", "must lie in (0, 1)"));
        }
        Ok(Self {
            treatment,
            assign_prob,
            outcomes,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.treatment.len()
    }
}

pub fn classify(treatment: &[bool], g: &DirectedGraph) -> Result<Vec<Condition>> {
    check_len("treatment", g.n_nodes(), treatment.len())?;
    (0..g.n_nodes())
        .map(|i| {
            let dt = g.treated_in_degree(i, treatment)?;
            Ok(Condition::new(treatment[i], dt > 0))
        })
        .collect()
}

/// Probability of each condition for a subject with in-degree `d` when every
/// subject is treated independently with probability `assign_prob`.
pub fn exposure_probabilities(assign_prob: f64, d: usize) -> [f64; 4] {
    let pi = assign_prob;
    let none = libm::pow(1.0 - pi, d as f64);
    [
        (1.0 - pi) * none,
        (1.0 - pi) * (1.0 - none),
        pi * none,
        pi * (1.0 - none),
    ]
}

/// Horvitz-Thompson estimates together with the bookkeeping needed to audit
/// them. Subjects with zero in-degree are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtEstimate {
    /// `None` where no included subject fell in the condition.
    pub means: [Option<f64>; 4],
    pub counts: [usize; 4],
    pub conditions: Vec<Condition>,
    pub probabilities: Vec<[f64; 4]>,
    pub included: Vec<usize>,
    pub excluded: Vec<usize>,
}

impl HtEstimate {
    /// All four means, or an error naming the first empty condition.
    pub fn complete_means(&self) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for c in Condition::ALL {
            out[c.index()] = self.means[c.index()].ok_or(Error::EmptyCondition(c.name()))?;
        }
        Ok(out)
    }
}

/// Horvitz-Thompson means over subjects with positive in-degree in `g`,
/// leaving empty conditions as `None`.
pub fn ht_estimate_partial(design: &ExperimentDesign, g: &DirectedGraph) -> Result<HtEstimate> {
    check_len("design", g.n_nodes(), design.n_subjects())?;
    let conditions = classify(&design.treatment, g)?;
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let mut probabilities = Vec::with_capacity(g.n_nodes());
    for (i, &c) in conditions.iter().enumerate() {
        let d = g.in_degree(i)?;
        let probs = exposure_probabilities(design.assign_prob, d);
        probabilities.push(probs);
        if d == 0 {
            excluded.push(i);
            continue;
        }
        included.push(i);
        let p = probs[c.index()];
        if p <= 0.0 {
            return Err(Error::ZeroProbability(i));
        }
        sums[c.index()] += design.outcomes[i] / p;
        counts[c.index()] += 1;
    }
    let n_incl = included.len() as f64;
    let mut means = [None; 4];
    for c in 0..4 {
        if counts[c] > 0 {
            means[c] = Some(sums[c] / n_incl);
        }
    }
    Ok(HtEstimate {
        means,
        counts,
        conditions,
        probabilities,
        included,
        excluded,
    })
}

/// Horvitz-Thompson means; errors if any condition is empty.
pub fn ht_estimate(design: &ExperimentDesign, g: &DirectedGraph) -> Result<HtEstimate> {
    let est = ht_estimate_partial(design, g)?;
    est.complete_means()?;
    Ok(est)
}

/// Model-based estimate assuming `g` is the true network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEstimate {
    pub family: OutcomeFamily,
    pub means: [f64; 4],
}

/// Fits the outcome family on observed `(condition, in-degree, outcome)`
/// triples and averages the fitted conditional means over all subjects'
/// degrees.
pub fn regression_estimate(
    design: &ExperimentDesign,
    g: &DirectedGraph,
    kind: FamilyKind,
) -> Result<RegressionEstimate> {
    check_len("design", g.n_nodes(), design.n_subjects())?;
    let conditions = classify(&design.treatment, g)?;
    let degrees = g.in_degrees();
    let family = crate::em::mstep::hard_fit(kind, &conditions, &degrees, &design.outcomes)?;
    let means = family_means(&family, &degrees);
    Ok(RegressionEstimate { family, means })
}

/// `(1/N) sum_i E_f[y | c, d_i]` for each condition.
pub fn family_means(family: &OutcomeFamily, degrees: &[usize]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for c in Condition::ALL {
        let total: f64 = degrees.iter().map(|&d| family.mean(c, d as f64)).sum();
        out[c.index()] = total / degrees.len() as f64;
    }
    out
}

/// Expected Horvitz-Thompson estimate computed on an observed network while
/// outcomes follow the true network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasOracle {
    pub expected: [f64; 4],
    /// Monte Carlo standard errors; `None` under exact enumeration.
    pub std_errors: Option<[f64; 4]>,
    pub exact: bool,
    /// Subjects with positive observed in-degree.
    pub included: Vec<usize>,
    pub n_assignments: u64,
}

/// Largest network handled by exact enumeration over treatment vectors.
pub const ENUMERATION_LIMIT: usize = 12;

/// Expectation over treatment assignments of the HT estimator on
/// `observed_g`, holding both networks fixed. `potential[i][c]` is subject
/// `i`'s potential outcome under condition `c`. Enumerates all `2^N`
/// assignments when `N <= 12`, otherwise averages `n_assignments` draws.
pub fn ht_bias_oracle(
    true_g: &DirectedGraph,
    observed_g: &DirectedGraph,
    potential: &[[f64; 4]],
    assign_prob: f64,
    n_assignments: u64,
    seed: u64,
) -> Result<BiasOracle> {
    let n = true_g.n_nodes();
    check_len("observed graph", n, observed_g.n_nodes())?;
    check_len("potential outcomes", n, potential.len())?;
    if !(assign_prob > 0.0 && assign_prob < 1.0) {
        return Err(invalid("assign_prob", "must lie in (0, 1)"));
    }
    let included: Vec<usize> = (0..n).filter(|&i| observed_g.in_degree(i).unwrap_or(0) > 0).collect();
    let obs_probs: Vec<[f64; 4]> = observed_g
        .in_degrees()
        .into_iter()
        .map(|d| exposure_probabilities(assign_prob, d))
        .collect();

    let n_incl = included.len().max(1) as f64;
    let ht_once = |t: &[bool]| -> Result<[f64; 4]> {
        let mut acc = [0.0; 4];
        for &i in &included {
            let obs_c = Condition::new(t[i], observed_g.treated_in_degree(i, t)? > 0);
            let true_c = Condition::new(t[i], true_g.treated_in_degree(i, t)? > 0);
            acc[obs_c.index()] += potential[i][true_c.index()] / obs_probs[i][obs_c.index()];
        }
        acc.iter_mut().for_each(|a| *a /= n_incl);
        Ok(acc)
    };

    if n <= ENUMERATION_LIMIT {
        let mut expected = [0.0; 4];
        let mut t = vec![false; n];
        for mask in 0u32..(1u32 << n) {
            let mut k = 0;
            for (i, ti) in t.iter_mut().enumerate() {
                *ti = mask >> i & 1 == 1;
                k += *ti as i32;
            }
            let w = libm::pow(assign_prob, k as f64) * libm::pow(1.0 - assign_prob, (n as i32 - k) as f64);
            let est = ht_once(&t)?;
            for c in 0..4 {
                expected[c] += w * est[c];
            }
        }
        return Ok(BiasOracle {
            expected,
            std_errors: None,
            exact: true,
            included,
            n_assignments: 1u64 << n,
        });
    }

    if n_assignments < 2 {
        return Err(invalid("n_assignments", "must be at least 2"));
    }
    let mut rng = rng_from_seed(seed);
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    let mut t = vec![false; n];
    for _ in 0..n_assignments {
        for ti in t.iter_mut() {
            *ti = rng.random::<f64>() < assign_prob;
        }
        let est = ht_once(&t)?;
        for c in 0..4 {
            sum[c] += est[c];
            sum_sq[c] += est[c] * est[c];
        }
    }
    let r = n_assignments as f64;
    let mut expected = [0.0; 4];
    let mut se = [0.0; 4];
    for c in 0..4 {
        expected[c] = sum[c] / r;
        let var = (sum_sq[c] / r - expected[c] * expected[c]).max(0.0) * r / (r - 1.0);
        se[c] = math::sqrt(var / r);
    }
    Ok(BiasOracle {
        expected,
        std_errors: Some(se),
        exact: false,
        included,
        n_assignments,
    })
}
