//! Subcommand implementations. Each produces named output files; `run`
//! writes them with a manifest, or prints the primary output when no output
//! directory is given.

use std::path::{Path, PathBuf};

use netspill_core::em::{fit, parametric_bootstrap, BootstrapSummary, FitResult};
use netspill_core::exposure::{ht_bias_oracle, ht_estimate_partial};
use netspill_core::mixture::{FamilyKind, Mixture, MixtureData};
use netspill_core::prior::moment_match;
use netspill_core::rng::derive_seed;
use netspill_core::sim::{heterogeneous_networks, run_protocol, PriorMode, SimProtocol};
use netspill_core::{BetaBinomialPrior, Condition, DirectedGraph, ExperimentDesign, NodeGroups};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cli::{BiasOracleArgs, Cli, Command, FamilyArg, FitArgs, HtArgs, SimulateArgs};
use crate::config::{read_json, FitFileConfig, NetworkSource, PriorSpec, ProtocolFile};
use crate::error::{CliError, Result};
use crate::io::{self, NodeIndex};
use crate::manifest::{digest_file, now, sha256_hex, FileDigest, RunManifest};

/// Seed stream for generated simulation networks.
const NETWORK_STREAM: u64 = 1;
/// Seed stream for bootstrap replicates.
const BOOTSTRAP_STREAM: u64 = 1;

/// What a subcommand produced.
struct Run {
    command: &'static str,
    /// Effective configuration, hashed into the manifest.
    config: Value,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    /// File name and contents; the first is the primary output.
    outputs: Vec<(&'static str, Vec<u8>)>,
    out_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    let started_at = now();
    let run = match command {
        Command::Ht(a) => cmd_ht(&a)?,
        Command::Fit(a) => cmd_fit(&a)?,
        Command::Simulate(a) => cmd_simulate(&a)?,
        Command::BiasOracle(a) => cmd_bias_oracle(&a)?,
    };
    finish(run, started_at)
}

fn finish(run: Run, started_at: String) -> Result<()> {
    let Some(dir) = &run.out_dir else {
        let (_, bytes) = &run.outputs[0];
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        return stdout.write_all(bytes).map_err(|e| CliError::io("<stdout>", e));
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &run.outputs {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let written = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        if written != *bytes {
            return Err(CliError::config(&path, "output differs from what was written"));
        }
        outputs.push(FileDigest {
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
        });
    }
    let inputs = run.inputs.iter().map(|p| digest_file(p)).collect::<Result<Vec<_>>>()?;
    RunManifest {
        command: run.command.to_string(),
        config_sha256: sha256_hex(&serde_json::to_vec(&run.config).expect("config serializes")),
        inputs,
        outputs,
        seed: run.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: now(),
    }
    .write(dir)
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("result serializes");
    bytes.push(b'\n');
    bytes
}

/// `{condition name: value}` in condition order.
fn by_condition<T: Serialize>(values: [T; 4]) -> Value {
    let mut map = Map::new();
    for (c, v) in Condition::ALL.iter().zip(values) {
        map.insert(c.name().to_string(), json!(v));
    }
    Value::Object(map)
}

fn named(nodes: &NodeIndex, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| nodes.ids()[i].clone()).collect()
}

fn cmd_ht(a: &HtArgs) -> Result<Run> {
    let table = io::read_design(&a.design)?;
    let g = io::read_edges(&a.graph, &table.nodes)?;
    let design = ExperimentDesign::new(table.treatment, a.assign_prob, table.outcomes)?;
    let est = ht_estimate_partial(&design, &g)?;
    let empty: Vec<&str> = Condition::ALL
        .iter()
        .filter(|c| est.means[c.index()].is_none())
        .map(|c| c.name())
        .collect();
    let degrees = g.in_degrees();
    let subjects: Vec<Value> = (0..g.n_nodes())
        .map(|i| {
            json!({
                "node": table.nodes.ids()[i],
                "in_degree": degrees[i],
                "condition": est.conditions[i].name(),
                "probabilities": by_condition(est.probabilities[i]),
                "included": degrees[i] > 0,
            })
        })
        .collect();
    let report = json!({
        "assign_prob": a.assign_prob,
        "means": by_condition(est.means),
        "empty_conditions": empty,
        "counts": by_condition(est.counts),
        "n_included": est.included.len(),
        "excluded": named(&table.nodes, &est.excluded),
        "subjects": subjects,
    });
    Ok(Run {
        command: "ht",
        config: json!({ "assign_prob": a.assign_prob }),
        inputs: vec![a.design.clone(), a.graph.clone()],
        seed: None,
        outputs: vec![("estimates.json", to_json_bytes(&report))],
        out_dir: a.out.clone(),
    })
}

/// Unstratified prior per the configured mode.
fn network_prior(spec: &PriorSpec, g: &DirectedGraph, config_path: &Path) -> Result<BetaBinomialPrior> {
    let size = g.n_nodes().saturating_sub(1);
    let mu = match spec.mode {
        PriorMode::Density => Some(
            spec.mu
                .ok_or_else(|| CliError::config(config_path, "prior mode `density` needs `prior.mu`"))?,
        ),
        PriorMode::Empirical => spec.mu,
    };
    let matched = moment_match(&g.in_degrees(), size, mu)?.prior;
    Ok(match spec.rho {
        Some(rho) => BetaBinomialPrior::new(matched.mu(), rho, size)?,
        None => matched,
    })
}

/// Per-stratum priors: configured, or each stratum's observed density with
/// no overdispersion.
fn strata_priors(spec: &PriorSpec, g: &DirectedGraph, groups: &NodeGroups) -> Result<[BetaBinomialPrior; 2]> {
    let size = g.n_nodes().saturating_sub(1);
    if let Some([w, b]) = spec.strata {
        return Ok([
            BetaBinomialPrior::new(w.mu, w.rho, size)?,
            BetaBinomialPrior::new(b.mu, b.rho, size)?,
        ]);
    }
    let n = g.n_nodes();
    let mut sizes = std::collections::BTreeMap::new();
    for i in 0..n {
        *sizes.entry(groups.group(i)).or_insert(0usize) += 1;
    }
    let within_pairs: usize = sizes.values().map(|s| s * (s - 1)).sum();
    let between_pairs = n * (n - 1) - within_pairs;
    let within_edges = g.edges().filter(|&(s, d)| groups.group(s) == groups.group(d)).count();
    let between_edges = g.n_edges() - within_edges;
    let density = |e: usize, pairs: usize| if pairs == 0 { 0.0 } else { e as f64 / pairs as f64 };
    Ok([
        BetaBinomialPrior::new(density(within_edges, within_pairs), 0.0, size)?,
        BetaBinomialPrior::new(density(between_edges, between_pairs), 0.0, size)?,
    ])
}

fn check_binomial_outcomes(table: &io::DesignTable, trials: u32, path: &Path) -> Result<()> {
    for (y, id) in table.outcomes.iter().zip(table.nodes.ids()) {
        if y.fract() != 0.0 || *y < 0.0 || *y > trials as f64 {
            return Err(CliError::config(
                path,
                format!("outcome {y} of node `{id}` is not a count in 0..={trials}"),
            ));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    nodes: &'a [String],
    config: &'a FitFileConfig,
    stratified: bool,
    priors: Vec<BetaBinomialPrior>,
    result: &'a FitResult,
    bootstrap: Option<BootstrapSummary>,
}

fn cmd_fit(a: &FitArgs) -> Result<Run> {
    let config_path = a.config.clone().unwrap_or_else(|| PathBuf::from("<defaults>"));
    let mut cfg: FitFileConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitFileConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.fit.seed = s;
    }
    cfg.fit.family = match (a.family, a.trials) {
        (Some(FamilyArg::Gaussian), None) => FamilyKind::Gaussian,
        (Some(FamilyArg::Gaussian), Some(_)) => {
            return Err(CliError::Usage("--trials applies to the binomial family only".into()))
        }
        (Some(FamilyArg::Binomial), Some(trials)) => FamilyKind::Binomial { trials },
        (Some(FamilyArg::Binomial), None) => match cfg.fit.family {
            k @ FamilyKind::Binomial { .. } => k,
            FamilyKind::Gaussian => return Err(CliError::Usage("--family binomial needs --trials".into())),
        },
        (None, Some(trials)) => FamilyKind::Binomial { trials },
        (None, None) => cfg.fit.family,
    };
    if a.responsibilities && a.out.is_none() {
        return Err(CliError::Usage("--responsibilities needs --out".into()));
    }
    cfg.fit
        .validate()
        .map_err(|e| CliError::config(&config_path, e.to_string()))?;

    let table = io::read_design(&a.design)?;
    if let FamilyKind::Binomial { trials } = cfg.fit.family {
        check_binomial_outcomes(&table, trials, &a.design)?;
    }
    let g = io::read_edges(&a.graph, &table.nodes)?;
    let design = ExperimentDesign::new(table.treatment.clone(), a.assign_prob, table.outcomes.clone())?;
    let (data, priors) = if a.stratified {
        let groups = table
            .groups
            .clone()
            .ok_or_else(|| CliError::config(&a.design, "--stratified needs a `group` column in the design file"))?;
        let groups = NodeGroups::new(groups);
        let priors = strata_priors(&cfg.prior, &g, &groups)?;
        (
            MixtureData::from_network_stratified(&design, &g, &groups, priors)?,
            priors.to_vec(),
        )
    } else {
        let prior = network_prior(&cfg.prior, &g, &config_path)?;
        (MixtureData::from_network(&design, &g, prior)?, vec![prior])
    };
    let mix = Mixture::new(data, cfg.tail_mass)?;
    let result = fit(&mix, &cfg.fit)?;
    let bootstrap = match a.bootstrap {
        Some(m) => Some(parametric_bootstrap(
            &mix,
            &result,
            &cfg.fit,
            m,
            derive_seed(cfg.fit.seed, BOOTSTRAP_STREAM),
        )?),
        None => None,
    };
    let report = FitReport {
        nodes: table.nodes.ids(),
        config: &cfg,
        stratified: a.stratified,
        priors,
        result: &result,
        bootstrap,
    };
    let mut outputs = vec![("fit.json", to_json_bytes(&report))];
    if a.responsibilities {
        outputs.push((
            "responsibilities.csv",
            io::responsibilities_csv(&result.responsibilities, &table.nodes),
        ));
    }
    let mut inputs = vec![a.design.clone(), a.graph.clone()];
    inputs.extend(a.config.clone());
    Ok(Run {
        command: "fit",
        config: json!({
            "config": cfg,
            "assign_prob": a.assign_prob,
            "stratified": a.stratified,
            "bootstrap": a.bootstrap,
        }),
        inputs,
        seed: Some(cfg.fit.seed),
        outputs,
        out_dir: a.out.clone(),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Run> {
    let mut proto: ProtocolFile = read_json(&a.protocol)?;
    if let Some(s) = a.seed {
        proto.settings.seed = s;
    }
    proto
        .settings
        .validate()
        .map_err(|e| CliError::config(&a.protocol, e.to_string()))?;
    let seed = proto.settings.seed;
    let mut inputs = vec![a.protocol.clone()];
    let networks = match &proto.networks {
        NetworkSource::Generate { count, n, mu, rho } => {
            if *count == 0 {
                return Err(CliError::config(&a.protocol, "network count must be positive"));
            }
            heterogeneous_networks(*count, *n, *mu, *rho, derive_seed(seed, NETWORK_STREAM))
                .map_err(|e| CliError::config(&a.protocol, e.to_string()))?
        }
        NetworkSource::Files { paths } => {
            if paths.is_empty() {
                return Err(CliError::config(&a.protocol, "no network files"));
            }
            let base = a.protocol.parent().unwrap_or(Path::new("."));
            let mut out = Vec::with_capacity(paths.len());
            for p in paths {
                let path = base.join(p);
                out.push(io::read_edge_list(&path, None)?);
                inputs.push(path);
            }
            out
        }
    };
    let output = run_protocol(&SimProtocol {
        networks,
        settings: proto.settings.clone(),
    })?;
    Ok(Run {
        command: "simulate",
        config: serde_json::to_value(&proto).expect("protocol serializes"),
        inputs,
        seed: Some(seed),
        outputs: vec![
            ("grid.csv", io::grid_csv(&output.long_rows())),
            ("failures.csv", io::failures_csv(&output.failures)),
        ],
        out_dir: Some(a.out.clone()),
    })
}

fn cmd_bias_oracle(a: &BiasOracleArgs) -> Result<Run> {
    let (nodes, potential) = io::read_potential_outcomes(&a.potential)?;
    let true_g = io::read_edges(&a.true_graph, &nodes)?;
    let observed_g = io::read_edges(&a.observed_graph, &nodes)?;
    let oracle = ht_bias_oracle(&true_g, &observed_g, &potential, a.assign_prob, a.draws, a.seed)?;
    // Target of the HT estimator on the true network.
    let positive: Vec<usize> = (0..nodes.len()).filter(|&i| true_g.in_degrees()[i] > 0).collect();
    let true_means = if positive.is_empty() {
        None
    } else {
        let mut m = [0.0; 4];
        for &i in &positive {
            for c in 0..4 {
                m[c] += potential[i][c] / positive.len() as f64;
            }
        }
        Some(m)
    };
    let bias = true_means.map(|m| {
        let mut b = [0.0; 4];
        for c in 0..4 {
            b[c] = oracle.expected[c] - m[c];
        }
        by_condition(b)
    });
    let report = json!({
        "assign_prob": a.assign_prob,
        "exact": oracle.exact,
        "n_assignments": oracle.n_assignments,
        "expected": by_condition(oracle.expected),
        "std_errors": oracle.std_errors.map(by_condition),
        "true_means": true_means.map(by_condition),
        "bias": bias,
        "included": named(&nodes, &oracle.included),
    });
    Ok(Run {
        command: "bias-oracle",
        config: json!({ "assign_prob": a.assign_prob, "draws": a.draws }),
        inputs: vec![a.true_graph.clone(), a.observed_graph.clone(), a.potential.clone()],
        seed: Some(a.seed),
        outputs: vec![("bias_oracle.json", to_json_bytes(&report))],
        out_dir: a.out.clone(),
    })
}
