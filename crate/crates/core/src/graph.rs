//! Directed influence networks.
//!
//! An edge `src -> dst` means `src` can influence `dst`; exposure is driven by
//! in-neighbor lists. Node indices are dense `0..n`.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prior::BetaBinomialPrior;
use crate::rng::rng_from_seed;

/// Per-edge categorical labels, stored parallel to the in-neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeStrata {
    labels: Vec<String>,
    per_edge: Vec<Vec<u16>>,
}

impl EdgeStrata {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n_nodes: usize,
    in_neighbors: Vec<Vec<u32>>,
    edge_strata: Option<EdgeStrata>,
}

impl DirectedGraph {
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            in_neighbors: vec![Vec::new(); n_nodes],
            edge_strata: None,
        }
    }

    /// Builds a graph from `(src, dst)` pairs, rejecting self-loops, duplicate
    /// edges and out-of-range indices.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut in_neighbors = vec![Vec::new(); n_nodes];
        for (src, dst) in edges {
            check_edge(n_nodes, src, dst)?;
            in_neighbors[dst].push(src as u32);
        }
        for (dst, list) in in_neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicateEdge {
                    src: w[0] as usize,
                    dst,
                });
            }
        }
        Ok(Self {
            n_nodes,
            in_neighbors,
            edge_strata: None,
        })
    }

    /// Like [`from_edges`](Self::from_edges) with one stratum label per edge.
    pub fn from_labeled_edges<I, S>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, S)>,
        S: AsRef<str>,
    {
        let mut labels: Vec<String> = Vec::new();
        let mut raw: Vec<Vec<(u32, u16)>> = vec![Vec::new(); n_nodes];
        for (src, dst, label) in edges {
            check_edge(n_nodes, src, dst)?;
            let label = label.as_ref();
            let id = match labels.iter().position(|l| l == label) {
                Some(id) => id,
                None => {
                    labels.push(label.to_string());
                    labels.len() - 1
                }
            };
            raw[dst].push((src as u32, id as u16));
        }
        let mut in_neighbors = Vec::with_capacity(n_nodes);
        let mut per_edge = Vec::with_capacity(n_nodes);
        for (dst, mut list) in raw.into_iter().enumerate() {
            list.sort_unstable_by_key(|&(s, _)| s);
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEdge {
                    src: w[0].0 as usize,
                    dst,
                });
            }
            in_neighbors.push(list.iter().map(|&(s, _)| s).collect());
            per_edge.push(list.iter().map(|&(_, l)| l).collect());
        }
        Ok(Self {
            n_nodes,
            in_neighbors,
            edge_strata: Some(EdgeStrata { labels, per_edge }),
        })
    }

    /// Replaces edge labels with the `within`/`between` strata implied by a
    /// node grouping.
    pub fn with_group_strata(mut self, groups: &NodeGroups) -> Result<Self> {
        groups.check_len(self.n_nodes)?;
        let per_edge = self
            .in_neighbors
            .iter()
            .enumerate()
            .map(|(dst, list)| {
                list.iter()
                    .map(|&src| groups.stratum(src as usize, dst) as u16)
                    .collect()
            })
            .collect();
        self.edge_strata = Some(EdgeStrata {
            labels: Stratum::ALL.iter().map(|s| s.label().to_string()).collect(),
            per_edge,
        });
        Ok(self)
    }

    pub fn without_strata(mut self) -> Self {
        self.edge_strata = None;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    /// `|E| / (n (n - 1))`; zero for graphs with fewer than two nodes.
    pub fn density(&self) -> f64 {
        let n = self.n_nodes as f64;
        if self.n_nodes < 2 {
            return 0.0;
        }
        self.n_edges() as f64 / (n * (n - 1.0))
    }

    pub fn in_neighbors(&self, i: usize) -> Result<&[u32]> {
        self.in_neighbors
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                index: i,
                n_nodes: self.n_nodes,
            })
    }

    pub fn in_degree(&self, i: usize) -> Result<usize> {
        self.in_neighbors(i).map(<[u32]>::len)
    }

    /// In-degrees of every node.
    pub fn in_degrees(&self) -> Vec<usize> {
        self.in_neighbors.iter().map(Vec::len).collect()
    }

    /// Number of in-neighbors `j` of `i` with `t[j]` set.
    pub fn treated_in_degree(&self, i: usize, treatment: &[bool]) -> Result<usize> {
        check_len("treatment", self.n_nodes, treatment.len())?;
        Ok(self.in_neighbors(i)?.iter().filter(|&&j| treatment[j as usize]).count())
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.in_neighbors
            .get(dst)
            .is_some_and(|l| l.binary_search(&(src as u32)).is_ok())
    }

    /// Edges as `(src, dst)`, ordered by `dst` then `src`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(dst, l)| l.iter().map(move |&s| (s as usize, dst)))
    }

    pub fn edge_strata(&self) -> Option<&EdgeStrata> {
        self.edge_strata.as_ref()
    }

    /// Label of the `k`-th in-edge of `dst`, if the graph carries labels.
    pub fn edge_label(&self, dst: usize, k: usize) -> Option<&str> {
        let s = self.edge_strata.as_ref()?;
        let id = *s.per_edge.get(dst)?.get(k)?;
        Some(s.labels[id as usize].as_str())
    }
}

fn check_edge(n_nodes: usize, src: usize, dst: usize) -> Result<()> {
    for index in [src, dst] {
        if index >= n_nodes {
            return Err(Error::NodeOutOfRange { index, n_nodes });
        }
    }
    if src == dst {
        return Err(Error::SelfLoop(src));
    }
    Ok(())
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { what, expected, actual });
    }
    Ok(())
}

/// Edge strata derived from a node grouping (e.g. village membership).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Within = 0,
    Between = 1,
}

impl Stratum {
    pub const ALL: [Stratum; 2] = [Stratum::Within, Stratum::Between];

    pub fn label(self) -> &'static str {
        match self {
            Stratum::Within => "within",
            Stratum::Between => "between",
        }
    }
}

/// Group id per node. A pair `(src, dst)` lies in the `within` stratum when
/// both nodes share a group and in `between` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeGroups {
    groups: Vec<u32>,
}

impl NodeGroups {
    pub fn new(groups: Vec<u32>) -> Self {
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, i: usize) -> u32 {
        self.groups[i]
    }

    #[inline]
    pub fn stratum(&self, src: usize, dst: usize) -> Stratum {
        if self.groups[src] == self.groups[dst] {
            Stratum::Within
        } else {
            Stratum::Between
        }
    }

    pub(crate) fn check_len(&self, n_nodes: usize) -> Result<()> {
        check_len("node groups", n_nodes, self.groups.len())
    }
}

/// Edge-drop probability `p` and false-edge probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub p: f64,
    pub q: f64,
}

impl ErrorRates {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let r = Self { p, q };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_open("p", self.p)?;
        check_unit_open("q", self.q)
    }
}

fn check_unit_open(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(invalid(name, "must lie in [0, 1)"));
    }
    Ok(())
}

/// How `q` is interpreted by [`corrupt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    #[default]
    Absolute,
    /// The realized false-edge probability is `q * density(G)`.
    DensityScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub rates: ErrorRates,
    pub q_mode: QMode,
    /// Separate rates for the `within` and `between` strata; requires node
    /// groups when corrupting.
    pub per_stratum: Option<[ErrorRates; 2]>,
}

impl CorruptionSpec {
    pub fn new(p: f64, q: f64, q_mode: QMode) -> Result<Self> {
        Ok(Self {
            rates: ErrorRates::new(p, q)?,
            q_mode,
            per_stratum: None,
        })
    }

    pub fn stratified(within: ErrorRates, between: ErrorRates, q_mode: QMode) -> Result<Self> {
        within.validate()?;
        between.validate()?;
        Ok(Self {
            rates: within,
            q_mode,
            per_stratum: Some([within, between]),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if let Some(s) = &self.per_stratum {
            s[0].validate()?;
            s[1].validate()?;
        }
        Ok(())
    }

    fn effective_q(&self, q: f64, density: f64) -> f64 {
        match self.q_mode {
            QMode::Absolute => q,
            QMode::DensityScaled => (q * density).clamp(0.0, 1.0 - f64::EPSILON),
        }
    }
}

/// Produces an observed network: every true edge is dropped independently
/// with probability `p`, every ordered non-edge (no self-loops) is added
/// independently with probability `q` (or `q * density`). False edges are
/// drawn only from non-edges. When `groups` is supplied the output carries
/// `within`/`between` edge labels.
pub fn corrupt(
    g: &DirectedGraph,
    spec: &CorruptionSpec,
    groups: Option<&NodeGroups>,
    seed: u64,
) -> Result<DirectedGraph> {
    spec.validate()?;
    if let Some(gr) = groups {
        gr.check_len(g.n_nodes)?;
    }
    let mut rng = rng_from_seed(seed);
    let n = g.n_nodes;
    let density = g.density();
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); n];

    match (&spec.per_stratum, groups) {
        (Some(rates), Some(gr)) => {
            let q_eff = [
                spec.effective_q(rates[0].q, density),
                spec.effective_q(rates[1].q, density),
            ];
            for (dst, list) in out.iter_mut().enumerate() {
                for src in 0..n {
                    if src == dst {
                        continue;
                    }
                    let s = gr.stratum(src, dst) as usize;
                    let keep = if g.has_edge(src, dst) {
                        rng.random::<f64>() >= rates[s].p
                    } else {
                        rng.random::<f64>() < q_eff[s]
                    };
                    if keep {
                        list.push(src as u32);
                    }
                }
            }
        }
        (Some(_), None) => return Err(invalid("per_stratum", "stratified corruption needs node groups")),
        (None, _) => {
            let p = spec.rates.p;
            let q_eff = spec.effective_q(spec.rates.q, density);
            for (dst, list) in g.in_neighbors.iter().enumerate() {
                for &src in list {
                    if rng.random::<f64>() >= p {
                        out[dst].push(src);
                    }
                }
            }
            if q_eff > 0.0 && n >= 2 {
                let universe = (n * (n - 1) - g.n_edges()) as u64;
                let k = Binomial::new(universe, q_eff)
                    .map_err(|_| invalid("q", "invalid binomial parameters"))?
                    .sample(&mut rng);
                add_false_edges(g, &mut out, k as usize, universe as usize, &mut rng);
            }
        }
    }

    for list in out.iter_mut() {
        list.sort_unstable();
    }
    let observed = DirectedGraph {
        n_nodes: n,
        in_neighbors: out,
        edge_strata: None,
    };
    match groups {
        Some(gr) => observed.with_group_strata(gr),
        None => Ok(observed),
    }
}

/// Adds `k` distinct non-edges chosen uniformly from the `universe` non-edges
/// of `g`. Rejection sampling when `k` is small relative to the universe,
/// otherwise a partial Fisher-Yates shuffle over the enumerated non-edges.
fn add_false_edges(g: &DirectedGraph, out: &mut [Vec<u32>], k: usize, universe: usize, rng: &mut crate::rng::Rng) {
    let n = g.n_nodes;
    if k == 0 {
        return;
    }
    if k.saturating_mul(4) <= universe {
        let mut chosen: BTreeSet<(u32, u32)> = BTreeSet::new();
        while chosen.len() < k {
            let dst = rng.random_range(0..n);
            let mut src = rng.random_range(0..n - 1);
            if src >= dst {
                src += 1;
            }
            if g.has_edge(src, dst) {
                continue;
            }
            chosen.insert((dst as u32, src as u32));
        }
        for (dst, src) in chosen {
            out[dst as usize].push(src);
        }
    } else {
        let mut pool: Vec<(u32, u32)> = Vec::with_capacity(universe);
        for dst in 0..n {
            for src in 0..n {
                if src != dst && !g.has_edge(src, dst) {
                    pool.push((dst as u32, src as u32));
                }
            }
        }
        for i in 0..k {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
            let (dst, src) = pool[i];
            out[dst as usize].push(src);
        }
    }
}

/// Directed Erdos-Renyi graph: every ordered pair `i != j` is linked
/// independently with probability `density`.
pub fn generate_er(n: usize, density: f64, seed: u64) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(invalid("density", "must lie in [0, 1]"));
    }
    let mut rng = rng_from_seed(seed);
    let mut in_neighbors = vec![Vec::new(); n];
    for (dst, list) in in_neighbors.iter_mut().enumerate() {
        for src in 0..n {
            if src != dst && rng.random::<f64>() < density {
                list.push(src as u32);
            }
        }
    }
    Ok(DirectedGraph {
        n_nodes: n,
        in_neighbors,
        edge_strata: None,
    })
}

/// Graph with beta-binomial in-degrees: each node draws a link propensity
/// from the beta distribution with mean `mu` and overdispersion `rho`, then
/// forms each possible in-edge independently with that propensity.
pub fn generate_heterogeneous(n: usize, prior: &BetaBinomialPrior, seed: u64) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if prior.size() != n - 1 {
        return Err(invalid("prior.size", "must equal n - 1"));
    }
    let mut rng = rng_from_seed(seed);
    let beta = match prior.beta_shapes() {
        Some((a, b)) => Some(Beta::new(a, b).map_err(|_| invalid("rho", "invalid beta shape parameters"))?),
        None => None,
    };
    let mut in_neighbors = vec![Vec::new(); n];
    for (dst, list) in in_neighbors.iter_mut().enumerate() {
        let propensity = match &beta {
            Some(b) => b.sample(&mut rng),
            None => prior.mu(),
        };
        for src in 0..n {
            if src != dst && rng.random::<f64>() < propensity {
                list.push(src as u32);
            }
        }
    }
    Ok(DirectedGraph {
        n_nodes: n,
        in_neighbors,
        edge_strata: None,
    })
}
