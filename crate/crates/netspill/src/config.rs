//! JSON configuration files for `fit` and `simulate`.

use std::path::{Path, PathBuf};

use netspill_core::em::FitConfig;
use netspill_core::sim::{PriorMode, SimSettings};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Degree prior of the fit. In `density` mode `mu` is the assumed density
/// of the true network and must be given; in `empirical` mode it is matched
/// to the observed mean in-degree. `rho` is matched to the observed in-degree
/// variance unless given. Defaults to `empirical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub mode: PriorMode,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    /// Per-stratum `(mu, rho)` for stratified fits, `within` first. Without
    /// it each stratum uses its observed density and `rho = 0`.
    pub strata: Option<[StratumPrior; 2]>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mode: PriorMode::Empirical,
            mu: None,
            rho: None,
            strata: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumPrior {
    pub mu: f64,
    #[serde(default)]
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitFileConfig {
    pub fit: FitConfig,
    pub prior: PriorSpec,
    /// Prior tail mass dropped from count-posterior supports; `null` keeps
    /// the full support.
    pub tail_mass: Option<f64>,
}

impl Default for FitFileConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            prior: PriorSpec::default(),
            tail_mass: Some(1e-8),
        }
    }
}

/// Where the simulation networks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    /// Beta-binomial random networks.
    Generate { count: usize, n: usize, mu: f64, rho: f64 },
    /// Edge lists with dense integer node indices, resolved relative to the
    /// protocol file.
    Files { paths: Vec<PathBuf> },
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::Generate {
            count: 75,
            n: 200,
            mu: 0.02,
            rho: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolFile {
    pub networks: NetworkSource,
    pub settings: SimSettings,
}

/// Parses a JSON file, reporting the line of the first error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}
