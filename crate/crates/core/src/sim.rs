//! Simulation grid over mismeasurement rates comparing Horvitz-Thompson and
//! EM estimates of the condition means against their known truth.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::em::{fit, FitConfig, MeanPopulation};
use crate::error::{invalid, Result};
use crate::exposure::{classify, ht_estimate_partial, Condition, ExperimentDesign};
use crate::graph::{corrupt, generate_heterogeneous, CorruptionSpec, DirectedGraph, QMode};
use crate::math;
use crate::mixture::{Mixture, MixtureData, OutcomeFamily};
use crate::prior::{moment_match, BetaBinomialPrior};
use crate::rng::{derive_path, rng_from_seed, Rng};

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// How the EM degree prior is calibrated for each observed network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// `mu` is the density of the true network; `rho` matches the variance
    /// of the observed in-degrees.
    #[default]
    Density,
    /// Both `mu` and `rho` match the observed in-degrees.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ht,
    Em,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ht => "ht",
            Method::Em => "em",
        }
    }
}

/// Everything about a simulation run except the networks themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub n_reps: usize,
    pub assign_prob: f64,
    pub truth: OutcomeFamily,
    pub p_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub q_mode: QMode,
    pub prior_mode: PriorMode,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    /// Prior tail mass dropped from count-posterior supports.
    pub tail_mass: Option<f64>,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        let grid = alloc::vec![0.0, 0.125, 0.25, 0.375, 0.5];
        Self {
            n_reps: 10,
            assign_prob: 0.25,
            truth: OutcomeFamily::Gaussian {
                alpha: [0.0, 0.25, 0.5, 1.0],
                beta: [0.05, 0.1, 0.05, 0.1],
                sigma2: 0.25,
            },
            p_grid: grid.clone(),
            q_grid: grid,
            q_mode: QMode::DensityScaled,
            prior_mode: PriorMode::Density,
            methods: alloc::vec![Method::Ht, Method::Em],
            fit: FitConfig {
                population: MeanPopulation::PositiveDegree,
                ..FitConfig::default()
            },
            tail_mass: Some(1e-8),
            seed: 0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps < 1 {
            return Err(invalid("n_reps", "must be at least 1"));
        }
        if !(self.assign_prob > 0.0 && self.assign_prob < 1.0) {
            return Err(invalid("assign_prob", "must lie in (0, 1)"));
        }
        for &v in self.p_grid.iter().chain(&self.q_grid) {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid("grid", format!("value {v} outside [0, 1)")));
            }
        }
        if self.p_grid.is_empty() || self.q_grid.is_empty() {
            return Err(invalid("grid", "must be nonempty"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "must be nonempty"));
        }
        self.truth.validate()?;
        self.fit.validate()
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.p_grid
            .iter()
            .flat_map(|&p| self.q_grid.iter().map(move |&q| (p, q)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimProtocol {
    pub networks: Vec<DirectedGraph>,
    pub settings: SimSettings,
}

/// `count` beta-binomial networks of `n` nodes with mean propensity `mu` and
/// overdispersion `rho`.
pub fn heterogeneous_networks(count: usize, n: usize, mu: f64, rho: f64, seed: u64) -> Result<Vec<DirectedGraph>> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    let prior = BetaBinomialPrior::new(mu, rho, n - 1)?;
    (0..count)
        .map(|k| generate_heterogeneous(n, &prior, derive_path(seed, &[k as u64])))
        .collect()
}

/// Condition means over subjects with positive true in-degree, the same
/// exclusion the Horvitz-Thompson estimator applies.
pub fn true_means_oracle(network: &DirectedGraph, truth: &OutcomeFamily) -> Result<[f64; 4]> {
    let degrees: Vec<usize> = network.in_degrees().into_iter().filter(|&d| d > 0).collect();
    if degrees.is_empty() {
        return Err(invalid("network", "every node is isolated"));
    }
    Ok(crate::exposure::family_means(truth, &degrees))
}

/// Estimate minus truth per condition for one network, replicate, cell and
/// method; `None` where the estimator left the condition empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub network: usize,
    pub rep: usize,
    pub p: f64,
    pub q: f64,
    pub method: Method,
    pub deviation: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFailure {
    pub network: usize,
    pub rep: usize,
    pub p: f64,
    pub q: f64,
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub p: f64,
    pub q: f64,
    pub method: Method,
    pub condition: Condition,
    /// Mean deviation per network, then averaged over networks.
    pub mean_dev: f64,
    pub q10: f64,
    pub q90: f64,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub summaries: Vec<CellSummary>,
    pub records: Vec<SimRecord>,
    pub failures: Vec<SimFailure>,
}

impl SimOutput {
    /// Long-format rows `(p, q, method, condition, stat, value)`.
    pub fn long_rows(&self) -> Vec<(f64, f64, &'static str, &'static str, &'static str, f64)> {
        let mut out = Vec::with_capacity(self.summaries.len() * 3);
        for s in &self.summaries {
            for (stat, v) in [("mean_dev", s.mean_dev), ("q10", s.q10), ("q90", s.q90)] {
                out.push((s.p, s.q, s.method.name(), s.condition.name(), stat, v));
            }
        }
        out
    }

    /// Deviations of one cell, method and condition across all records.
    pub fn deviations(&self, p: f64, q: f64, method: Method, c: Condition) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.p == p && r.q == q && r.method == method)
            .filter_map(|r| r.deviation[c.index()])
            .collect()
    }
}

struct JobOutput {
    records: Vec<SimRecord>,
    failures: Vec<SimFailure>,
}

fn run_job(network_id: usize, g: &DirectedGraph, rep: usize, s: &SimSettings) -> Result<JobOutput> {
    let n = g.n_nodes();
    let truth_means = true_means_oracle(g, &s.truth)?;
    let job_seed = derive_path(s.seed, &[network_id as u64, rep as u64]);
    let mut rng = rng_from_seed(derive_path(job_seed, &[0]));
    let t: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < s.assign_prob).collect();
    let conditions = classify(&t, g)?;
    let degrees = g.in_degrees();
    let y: Vec<f64> = (0..n)
        .map(|i| s.truth.sample(&mut rng, conditions[i], degrees[i] as f64))
        .collect();
    let design = ExperimentDesign::new(t, s.assign_prob, y)?;
    let density = g.density();

    let mut out = JobOutput {
        records: Vec::new(),
        failures: Vec::new(),
    };
    for (cell, (p, q)) in s.cells().into_iter().enumerate() {
        let cell_seed = derive_path(job_seed, &[1, cell as u64]);
        let spec = CorruptionSpec::new(p, q, s.q_mode)?;
        let observed = corrupt(g, &spec, None, cell_seed)?;
        for &method in &s.methods {
            let est: Result<[Option<f64>; 4]> = match method {
                Method::Ht => ht_estimate_partial(&design, &observed).map(|e| e.means),
                Method::Em => {
                    em_means(&design, &observed, density, s, derive_path(cell_seed, &[1])).map(|m| m.map(Some))
                }
            };
            match est {
                Ok(m) => {
                    let mut deviation = [None; 4];
                    for c in 0..4 {
                        deviation[c] = m[c].map(|v| v - truth_means[c]);
                    }
                    out.records.push(SimRecord {
                        network: network_id,
                        rep,
                        p,
                        q,
                        method,
                        deviation,
                    });
                }
                Err(e) => out.failures.push(SimFailure {
                    network: network_id,
                    rep,
                    p,
                    q,
                    method,
                    error: e.to_string(),
                }),
            }
        }
    }
    Ok(out)
}

fn em_means(
    design: &ExperimentDesign,
    observed: &DirectedGraph,
    true_density: f64,
    s: &SimSettings,
    seed: u64,
) -> Result<[f64; 4]> {
    let n = observed.n_nodes();
    let mu = match s.prior_mode {
        PriorMode::Density => Some(true_density),
        PriorMode::Empirical => None,
    };
    let prior = moment_match(&observed.in_degrees(), n - 1, mu)?.prior;
    let data = MixtureData::from_network(design, observed, prior)?;
    let mix = Mixture::new(data, s.tail_mass)?;
    let config = FitConfig {
        seed,
        family: s.truth.kind(),
        ..s.fit
    };
    Ok(fit(&mix, &config)?.means)
}

/// Runs every (network, replicate, grid cell, method) combination. Failures
/// of single estimates are recorded rather than aborting the run.
pub fn run_protocol(protocol: &SimProtocol) -> Result<SimOutput> {
    let s = &protocol.settings;
    s.validate()?;
    if protocol.networks.is_empty() {
        return Err(invalid("networks", "must be nonempty"));
    }
    let jobs: Vec<(usize, usize)> = (0..protocol.networks.len())
        .flat_map(|k| (0..s.n_reps).map(move |r| (k, r)))
        .collect();
    let outputs = crate::par::map_collect(jobs, |(k, r)| run_job(k, &protocol.networks[k], r, s));
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outputs {
        let o = o?;
        records.extend(o.records);
        failures.extend(o.failures);
    }
    let summaries = summarize(&records, s, protocol.networks.len());
    Ok(SimOutput {
        summaries,
        records,
        failures,
    })
}

fn summarize(records: &[SimRecord], s: &SimSettings, n_networks: usize) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for (p, q) in s.cells() {
        for &method in &s.methods {
            for c in Condition::ALL {
                let mut per_net = alloc::vec![(0.0, 0usize); n_networks];
                let mut pooled = Vec::new();
                for r in records.iter().filter(|r| r.p == p && r.q == q && r.method == method) {
                    if let Some(v) = r.deviation[c.index()] {
                        per_net[r.network].0 += v;
                        per_net[r.network].1 += 1;
                        pooled.push(v);
                    }
                }
                let net_means: Vec<f64> = per_net
                    .iter()
                    .filter(|(_, k)| *k > 0)
                    .map(|(sum, k)| sum / *k as f64)
                    .collect();
                out.push(CellSummary {
                    p,
                    q,
                    method,
                    condition: c,
                    mean_dev: math::mean(&net_means),
                    q10: math::quantile(&pooled, 0.1),
                    q90: math::quantile(&pooled, 0.9),
                    n_records: pooled.len(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        let g = DirectedGraph::from_edges(4, [(1, 0), (2, 0), (0, 1), (3, 2)]).unwrap();
        let flat = OutcomeFamily::gaussian([1.0, 2.0, 3.0, 4.0], [0.0; 4], 1.0).unwrap();
        assert_eq!(true_means_oracle(&g, &flat).unwrap(), [1.0, 2.0, 3.0, 4.0]);

        // Mean positive in-degree 4.
        let g = DirectedGraph::from_edges(6, [(1, 0), (2, 0), (3, 0), (4, 0), (5, 0), (0, 1), (2, 1), (3, 1)]).unwrap();
        let truth = SimSettings::default().truth;
        let mu = true_means_oracle(&g, &truth).unwrap();
        for (a, b) in mu.iter().zip([0.2, 0.65, 0.7, 1.4]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn settings_validation() {
        let mut s = SimSettings::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.cells().len(), 25);
        s.q_grid.push(1.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn smoke_run_is_deterministic() {
        let nets = heterogeneous_networks(1, 60, 0.05, 0.01, 3).unwrap();
        let settings = SimSettings {
            n_reps: 1,
            p_grid: alloc::vec![0.25],
            q_grid: alloc::vec![0.25],
            fit: FitConfig {
                n_starts: 2,
                population: MeanPopulation::PositiveDegree,
                ..FitConfig::default()
            },
            ..SimSettings::default()
        };
        let protocol = SimProtocol {
            networks: nets,
            settings,
        };
        let a = run_protocol(&protocol).unwrap();
        let b = run_protocol(&protocol).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summaries.len(), 8);
        assert_eq!(a.long_rows().len(), 24);
    }
}
