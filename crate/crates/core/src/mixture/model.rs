use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::posterior::{ln_observation_table, posterior_from_logs, support_max};
use super::{convolve, tau_row, MismeasureParams, ModelParams, OutcomeFamily, PosteriorRow};
use crate::error::{invalid, Error, Result};
use crate::exposure::{Condition, ExperimentDesign};
use crate::graph::{check_len, DirectedGraph, NodeGroups, Stratum};
use crate::math::{self, LnFactorials, LnRate};
use crate::prior::BetaBinomialPrior;

/// Sub-population sizes and observed in-edge counts of one subject within one
/// stratum, split by the treatment of the other end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumCounts {
    pub treated_pop: usize,
    pub untreated_pop: usize,
    pub observed_treated: usize,
    pub observed_untreated: usize,
}

/// Everything the likelihood needs about one subject apart from its outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub network: usize,
    pub node: usize,
    pub treated: bool,
    /// Entry 0 holds the unstratified counts or the `within` stratum, entry 1
    /// the `between` stratum.
    pub strata: [StratumCounts; 2],
}

impl SubjectRecord {
    pub fn observed_degree(&self) -> usize {
        self.strata
            .iter()
            .map(|s| s.observed_treated + s.observed_untreated)
            .sum()
    }

    pub fn observed_condition(&self) -> Condition {
        let exposed = self.strata.iter().any(|s| s.observed_treated > 0);
        Condition::new(self.treated, exposed)
    }
}

/// Subjects, outcomes and degree priors of one or more experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureData {
    subjects: Vec<SubjectRecord>,
    outcomes: Vec<f64>,
    /// Prior per network and stratum; only entry 0 is used when unstratified.
    priors: Vec<[BetaBinomialPrior; 2]>,
    densities: Vec<f64>,
    n_strata: usize,
}

impl MixtureData {
    /// One experiment with a single degree prior for every sub-population.
    pub fn from_network(design: &ExperimentDesign, observed: &DirectedGraph, prior: BetaBinomialPrior) -> Result<Self> {
        check_len("design", observed.n_nodes(), design.n_subjects())?;
        let t = &design.treatment;
        let n = t.len();
        let n_treated = t.iter().filter(|&&x| x).count();
        let mut subjects = Vec::with_capacity(n);
        for i in 0..n {
            let treated_pop = n_treated - t[i] as usize;
            let obs_t = observed.treated_in_degree(i, t)?;
            let obs = observed.in_degree(i)?;
            subjects.push(SubjectRecord {
                network: 0,
                node: i,
                treated: t[i],
                strata: [
                    StratumCounts {
                        treated_pop,
                        untreated_pop: n - 1 - treated_pop,
                        observed_treated: obs_t,
                        observed_untreated: obs - obs_t,
                    },
                    StratumCounts::default(),
                ],
            });
        }
        Ok(Self {
            subjects,
            outcomes: design.outcomes.clone(),
            priors: vec![[prior, prior]],
            densities: vec![observed.density()],
            n_strata: 1,
        })
    }

    /// One experiment whose pairs are split into `within` and `between`
    /// strata by `groups`, with a prior per stratum.
    pub fn from_network_stratified(
        design: &ExperimentDesign,
        observed: &DirectedGraph,
        groups: &NodeGroups,
        priors: [BetaBinomialPrior; 2],
    ) -> Result<Self> {
        let n = observed.n_nodes();
        check_len("design", n, design.n_subjects())?;
        groups.check_len(n)?;
        let t = &design.treatment;
        let n_treated = t.iter().filter(|&&x| x).count();
        let mut size: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for i in 0..n {
            let e = size.entry(groups.group(i)).or_default();
            e.0 += 1;
            e.1 += t[i] as usize;
        }
        let mut subjects = Vec::with_capacity(n);
        for i in 0..n {
            let (g_size, g_treated) = size[&groups.group(i)];
            let own = t[i] as usize;
            let w_t = g_treated - own;
            let w_nt = g_size - 1 - w_t;
            let b_t = n_treated - g_treated;
            let b_nt = (n - g_size) - b_t;
            let mut strata = [
                StratumCounts {
                    treated_pop: w_t,
                    untreated_pop: w_nt,
                    ..Default::default()
                },
                StratumCounts {
                    treated_pop: b_t,
                    untreated_pop: b_nt,
                    ..Default::default()
                },
            ];
            for &j in observed.in_neighbors(i)? {
                let j = j as usize;
                let s = &mut strata[groups.stratum(j, i) as usize];
                if t[j] {
                    s.observed_treated += 1;
                } else {
                    s.observed_untreated += 1;
                }
            }
            subjects.push(SubjectRecord {
                network: 0,
                node: i,
                treated: t[i],
                strata,
            });
        }
        Ok(Self {
            subjects,
            outcomes: design.outcomes.clone(),
            priors: vec![priors],
            densities: vec![observed.density()],
            n_strata: 2,
        })
    }

    /// Concatenates experiments that share one parameter vector.
    pub fn pool(parts: Vec<MixtureData>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or_else(|| invalid("parts", "must be nonempty"))?;
        for part in iter {
            if part.n_strata != out.n_strata {
                return Err(invalid("parts", "cannot pool stratified with unstratified data"));
            }
            let offset = out.priors.len();
            out.subjects.extend(part.subjects.into_iter().map(|mut s| {
                s.network += offset;
                s
            }));
            out.outcomes.extend(part.outcomes);
            out.priors.extend(part.priors);
            out.densities.extend(part.densities);
        }
        Ok(out)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_networks(&self) -> usize {
        self.priors.len()
    }

    pub fn is_stratified(&self) -> bool {
        self.n_strata == 2
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn priors(&self, network: usize) -> &[BetaBinomialPrior; 2] {
        &self.priors[network]
    }

    /// Average observed density across networks.
    pub fn observed_density(&self) -> f64 {
        math::mean(&self.densities)
    }

    pub fn observed_conditions(&self) -> Vec<Condition> {
        self.subjects.iter().map(|s| s.observed_condition()).collect()
    }

    pub fn observed_degrees(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.observed_degree()).collect()
    }

    /// Same subjects with new outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        check_len("outcomes", self.subjects.len(), outcomes.len())?;
        Ok(Self {
            outcomes,
            ..self.clone()
        })
    }
}

/// Posterior rows for every subject.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub rows: Vec<PosteriorRow>,
}

/// One count posterior to evaluate: `k` observed edges out of `n` others in
/// `stratum`, over the support `0..=ln_prior.len() - 1`.
#[derive(Debug, Clone)]
struct CountProblem {
    stratum: usize,
    n: usize,
    k: usize,
    ln_prior: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Key {
    treated: bool,
    /// (treated problem, untreated problem) per stratum.
    parts: Vec<(usize, usize)>,
}

/// Mixture model compiled for one data set: subjects sharing counts share a
/// posterior row, and every count posterior has a support fixed up front so
/// rows keep their shape as the error rates change.
#[derive(Debug, Clone)]
pub struct Mixture {
    data: MixtureData,
    lf: LnFactorials,
    problems: Vec<CountProblem>,
    keys: Vec<Key>,
    key_of: Vec<usize>,
}

impl Mixture {
    /// `tail` truncates each prior to its `1 - tail` support before the
    /// observed count is added; `None` keeps full support.
    pub fn new(data: MixtureData, tail: Option<f64>) -> Result<Self> {
        if let Some(t) = tail {
            if !(t > 0.0 && t <= 0.01) {
                return Err(invalid("tail_mass", "must lie in (0, 0.01]"));
            }
        }
        check_len("outcomes", data.subjects.len(), data.outcomes.len())?;
        let mut max_n = 0;
        // (network, stratum, size) -> (ln pmf, pmf)
        type PriorTables = BTreeMap<(usize, usize, usize), (Vec<f64>, Vec<f64>)>;
        let mut prior_cache = PriorTables::new();
        let mut problem_ids: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
        let mut problems: Vec<CountProblem> = Vec::new();
        let mut key_ids: BTreeMap<(usize, bool, [StratumCounts; 2]), usize> = BTreeMap::new();
        let mut keys = Vec::new();
        let mut key_of = Vec::with_capacity(data.subjects.len());

        for s in &data.subjects {
            let id = (s.network, s.treated, s.strata);
            if let Some(&k) = key_ids.get(&id) {
                key_of.push(k);
                continue;
            }
            let mut parts = Vec::with_capacity(data.n_strata);
            for (st, counts) in s.strata.iter().enumerate().take(data.n_strata) {
                let mut ids = [0usize; 2];
                for (slot, (n, k)) in ids.iter_mut().zip([
                    (counts.treated_pop, counts.observed_treated),
                    (counts.untreated_pop, counts.observed_untreated),
                ]) {
                    if k > n {
                        return Err(Error::CountExceedsPopulation {
                            observed: k,
                            population: n,
                        });
                    }
                    max_n = max_n.max(n);
                    let pid = (s.network, st, n, k);
                    *slot = match problem_ids.get(&pid) {
                        Some(&v) => v,
                        None => {
                            let (ln_pmf, pmf) = prior_cache.entry((s.network, st, n)).or_insert_with(|| {
                                let ln_pmf = data.priors[s.network][st].with_size(n).ln_pmf_table();
                                let pmf = ln_pmf.iter().map(|&v| math::exp(v)).collect();
                                (ln_pmf, pmf)
                            });
                            let u = support_max(pmf, k, tail);
                            problems.push(CountProblem {
                                stratum: st,
                                n,
                                k,
                                ln_prior: ln_pmf[..=u].to_vec(),
                            });
                            problem_ids.insert(pid, problems.len() - 1);
                            problems.len() - 1
                        }
                    };
                }
                parts.push((ids[0], ids[1]));
            }
            keys.push(Key {
                treated: s.treated,
                parts,
            });
            key_ids.insert(id, keys.len() - 1);
            key_of.push(keys.len() - 1);
        }
        Ok(Self {
            data,
            lf: LnFactorials::new(max_n),
            problems,
            keys,
            key_of,
        })
    }

    pub fn data(&self) -> &MixtureData {
        &self.data
    }

    pub fn n_subjects(&self) -> usize {
        self.data.subjects.len()
    }

    /// Number of distinct posterior rows.
    pub fn n_keys(&self) -> usize {
        self.keys.len()
    }

    pub fn key_of(&self, subject: usize) -> usize {
        self.key_of[subject]
    }

    /// Same compiled structure with new outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        Ok(Self {
            data: self.data.with_outcomes(outcomes)?,
            ..self.clone()
        })
    }

    fn check_params(&self, mis: &MismeasureParams) -> Result<()> {
        mis.validate()?;
        if !self.data.is_stratified() && mis.per_stratum.is_some() {
            return Err(invalid("per_stratum", "data carry no strata"));
        }
        Ok(())
    }

    fn count_posteriors(&self, mis: &MismeasureParams) -> Result<Vec<Vec<f64>>> {
        let strata = Stratum::ALL.map(|s| {
            let r = mis.rates(s);
            (LnRate::new(r.p), LnRate::new(r.q))
        });
        self.problems
            .iter()
            .map(|pr| {
                let (lp, lq) = &strata[pr.stratum];
                let u = pr.ln_prior.len() - 1;
                let obs = ln_observation_table(pr.n, pr.k, u, lp, lq, &self.lf);
                posterior_from_logs(&pr.ln_prior, &obs, pr.k, pr.n)
            })
            .collect()
    }

    /// Posterior row per distinct key.
    pub(crate) fn key_rows(&self, mis: &MismeasureParams) -> Result<Vec<PosteriorRow>> {
        self.check_params(mis)?;
        let post = self.count_posteriors(mis)?;
        Ok(self
            .keys
            .iter()
            .map(|key| {
                let (mut t, mut nt) = (post[key.parts[0].0].clone(), post[key.parts[0].1].clone());
                for &(a, b) in &key.parts[1..] {
                    t = convolve(&t, &post[a]);
                    nt = convolve(&nt, &post[b]);
                }
                tau_row(key.treated, &t, &nt)
            })
            .collect())
    }

    /// Latent (condition, degree) posterior of every subject given the
    /// observed network and treatments.
    pub fn tau(&self, mis: &MismeasureParams) -> Result<PosteriorTable> {
        let rows = self.key_rows(mis)?;
        Ok(PosteriorTable {
            rows: self.key_of.iter().map(|&k| rows[k].clone()).collect(),
        })
    }

    /// `sum_i log sum_{c,d} tau_i(c, d) f(y_i; c, d)`.
    pub fn log_likelihood(&self, params: &ModelParams) -> Result<f64> {
        params.family.validate()?;
        let rows = ln_rows(&self.key_rows(&params.mismeasure)?);
        let mut total = 0.0;
        for (i, &y) in self.data.outcomes.iter().enumerate() {
            let (_, ll) = joint_log_weights(&rows[self.key_of[i]], &params.family, y);
            if !ll.is_finite() {
                return Err(Error::Underflow(i));
            }
            total += ll;
        }
        Ok(total)
    }

    /// Sums per-subject rows (such as responsibilities) into rows per
    /// distinct likelihood key, the layout [`Self::rate_objective`] takes.
    pub fn aggregate_by_key(&self, rows: &[PosteriorRow]) -> Vec<PosteriorRow> {
        let mut out: Vec<Option<PosteriorRow>> = vec![None; self.keys.len()];
        for (i, row) in rows.iter().enumerate() {
            match &mut out[self.key_of[i]] {
                Some(acc) => acc.add_assign(row),
                slot @ None => *slot = Some(row.clone()),
            }
        }
        out.into_iter().map(|r| r.expect("every key has a subject")).collect()
    }

    /// `sum_keys sum_{c,d} gamma(c, d) ln tau(c, d; p, q)`, the part of the
    /// EM objective that depends on the error rates. `-inf` when the rates
    /// are invalid or put zero mass where `gamma` has mass.
    pub fn rate_objective(&self, gamma_by_key: &[PosteriorRow], mis: &MismeasureParams) -> f64 {
        let rows = match self.key_rows(mis) {
            Ok(r) => r,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut total = 0.0;
        for (g, t) in gamma_by_key.iter().zip(&rows) {
            for (gv, tv) in g
                .unexposed
                .iter()
                .chain(&g.exposed)
                .zip(t.unexposed.iter().chain(&t.exposed))
            {
                if *gv > 0.0 {
                    total += gv * math::ln(*tv);
                }
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

/// Elementwise `ln` of posterior rows, `-inf` where the mass is zero.
pub(crate) fn ln_rows(rows: &[PosteriorRow]) -> Vec<PosteriorRow> {
    let ln0 = |v: &Vec<f64>| -> Vec<f64> {
        v.iter()
            .map(|&t| if t > 0.0 { math::ln(t) } else { f64::NEG_INFINITY })
            .collect()
    };
    rows.iter()
        .map(|r| PosteriorRow {
            treated: r.treated,
            unexposed: ln0(&r.unexposed),
            exposed: ln0(&r.exposed),
        })
        .collect()
}

/// Log of `tau(c, d) f(y; c, d)` over a row of `ln tau`, and its log-sum-exp.
pub(crate) fn joint_log_weights(ln_row: &PosteriorRow, family: &OutcomeFamily, y: f64) -> (PosteriorRow, f64) {
    let mut out = ln_row.zeros_like();
    let mut max = f64::NEG_INFINITY;
    let ln_f = family.ln_density_of(y);
    for indirect in [false, true] {
        let c = ln_row.condition(indirect);
        for (d, (&lt, slot)) in ln_row.arm(indirect).iter().zip(out.arm_mut(indirect)).enumerate() {
            *slot = if lt > f64::NEG_INFINITY {
                lt + ln_f(c, d as f64)
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(*slot);
        }
    }
    if max == f64::NEG_INFINITY || max.is_nan() {
        return (out, f64::NEG_INFINITY);
    }
    let sum: f64 = out
        .unexposed
        .iter()
        .chain(&out.exposed)
        .map(|&v| math::exp(v - max))
        .sum();
    (out, max + math::ln(sum))
}
