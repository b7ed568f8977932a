//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use netspill_core::graph::ErrorRates;
use netspill_core::mixture::OutcomeFamily;
use netspill_core::{BetaBinomialPrior, Condition, DirectedGraph};

/// Beta-binomial pmf over `0..=n` by forward recursion on the ratio of
/// consecutive terms in linear space, rescaled against overflow and
/// normalized at the end. No log-gamma.
pub fn bb_pmf(n: usize, mu: f64, rho: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if mu == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if mu == 1.0 {
        out[n] = 1.0;
        return out;
    }
    // Success and failure shapes scaled by rho, so rho = 0 is the binomial.
    let (a, b) = (mu * (1.0 - rho), (1.0 - mu) * (1.0 - rho));
    out[0] = 1.0;
    for k in 0..n {
        let r = (n - k) as f64 / (k + 1) as f64 * (a + k as f64 * rho) / (b + (n - k - 1) as f64 * rho);
        out[k + 1] = out[k] * r;
        if out[k + 1] > 1e250 {
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Unnormalized weight of every latent (condition, degree) cell for subject
/// `i`: sums over every true in-neighbor set `S` of the prior probability
/// of `S` times the probability of the observed in-edges given `S`.
/// Returns `(weights by condition index, by degree)`.
pub fn enumerate_cells(
    observed: &DirectedGraph,
    treatment: &[bool],
    i: usize,
    rates: ErrorRates,
    prior: &BetaBinomialPrior,
) -> [Vec<f64>; 4] {
    let n = observed.n_nodes();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let n_t = others.iter().filter(|&&j| treatment[j]).count();
    let n_nt = others.len() - n_t;
    let pt = bb_pmf(n_t, prior.mu(), prior.rho());
    let pnt = bb_pmf(n_nt, prior.mu(), prior.rho());
    let mut cells: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    for mask in 0u32..(1 << others.len()) {
        let mut d_t = 0;
        let mut d_nt = 0;
        let mut lik = 1.0;
        for (b, &j) in others.iter().enumerate() {
            let is_true = mask >> b & 1 == 1;
            let seen = observed.has_edge(j, i);
            if is_true {
                if treatment[j] {
                    d_t += 1;
                } else {
                    d_nt += 1;
                }
            }
            lik *= match (is_true, seen) {
                (true, true) => 1.0 - rates.p,
                (true, false) => rates.p,
                (false, true) => rates.q,
                (false, false) => 1.0 - rates.q,
            };
        }
        let w = pt[d_t] / choose(n_t, d_t) * pnt[d_nt] / choose(n_nt, d_nt) * lik;
        let c = Condition::new(treatment[i], d_t > 0);
        cells[c.index()][d_t + d_nt] += w;
    }
    cells
}

pub fn normalize(cells: &mut [Vec<f64>; 4]) -> f64 {
    let z: f64 = cells.iter().flatten().sum();
    for v in cells.iter_mut().flatten() {
        *v /= z;
    }
    z
}

/// Outcome density written out from the textbook formulas.
pub fn density(family: &OutcomeFamily, y: f64, c: usize, d: f64) -> f64 {
    match *family {
        OutcomeFamily::Gaussian { alpha, beta, sigma2 } => {
            let m = alpha[c] + beta[c] * d;
            (-(y - m) * (y - m) / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
        }
        OutcomeFamily::Binomial { alpha, beta, trials } => {
            let eta = alpha[c] + beta[c] * d;
            let pr = 1.0 / (1.0 + (-eta).exp());
            let k = y as usize;
            if y != k as f64 || k > trials as usize {
                return 0.0;
            }
            choose(trials as usize, k) * pr.powi(k as i32) * (1.0 - pr).powi((trials as usize - k) as i32)
        }
    }
}

/// Graph on `n` nodes with the edges of `base` into every node except `i`,
/// whose in-neighbors are the members of `mask` among the other nodes.
pub fn with_in_neighbors(base: &DirectedGraph, i: usize, mask: u32) -> DirectedGraph {
    let n = base.n_nodes();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut edges: Vec<(usize, usize)> = base.edges().filter(|&(_, d)| d != i).collect();
    for (b, &j) in others.iter().enumerate() {
        if mask >> b & 1 == 1 {
            edges.push((j, i));
        }
    }
    DirectedGraph::from_edges(n, edges).unwrap()
}

/// One simulated experiment: true network, its corrupted observation and a
/// design with outcomes drawn from `truth` under the true exposures.
pub struct Experiment {
    pub truth_graph: DirectedGraph,
    pub observed: DirectedGraph,
    pub design: netspill_core::ExperimentDesign,
}

pub fn experiment(
    graph: DirectedGraph,
    truth: &OutcomeFamily,
    assign_prob: f64,
    rates: ErrorRates,
    seed: u64,
) -> Experiment {
    use netspill_core::exposure::classify;
    use netspill_core::graph::{corrupt, CorruptionSpec, QMode};
    use netspill_core::rng::{derive_seed, rng_from_seed};
    use rand::Rng;

    let n = graph.n_nodes();
    let mut rng = rng_from_seed(seed);
    let t: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < assign_prob).collect();
    let conditions = classify(&t, &graph).unwrap();
    let degrees = graph.in_degrees();
    let y: Vec<f64> = (0..n)
        .map(|i| truth.sample(&mut rng, conditions[i], degrees[i] as f64))
        .collect();
    let spec = CorruptionSpec::new(rates.p, rates.q, QMode::DensityScaled).unwrap();
    let observed = corrupt(&graph, &spec, None, derive_seed(seed, 1)).unwrap();
    Experiment {
        truth_graph: graph,
        observed,
        design: netspill_core::ExperimentDesign::new(t, assign_prob, y).unwrap(),
    }
}

/// Mixture over the observed network with the prior mean set to the true
/// density and the overdispersion matched to the observed degrees.
pub fn density_mixture(e: &Experiment, tail: Option<f64>) -> netspill_core::mixture::Mixture {
    use netspill_core::mixture::{Mixture, MixtureData};
    use netspill_core::prior::moment_match;

    let n = e.observed.n_nodes();
    let prior = moment_match(&e.observed.in_degrees(), n - 1, Some(e.truth_graph.density()))
        .unwrap()
        .prior;
    let data = MixtureData::from_network(&e.design, &e.observed, prior).unwrap();
    Mixture::new(data, tail).unwrap()
}

pub fn sim_truth() -> OutcomeFamily {
    OutcomeFamily::gaussian([0.0, 0.25, 0.5, 1.0], [0.05, 0.1, 0.05, 0.1], 0.25).unwrap()
}
