//! Latent exposure posteriors, outcome families and the observed-data
//! likelihood of the network mismeasurement mixture model.

mod family;
mod model;
mod posterior;

pub use family::{FamilyKind, OutcomeFamily};
pub use model::{Mixture, MixtureData, PosteriorTable, StratumCounts, SubjectRecord};
pub use posterior::{count_posterior, tau_row, PosteriorRow};

pub(crate) use model::{joint_log_weights, ln_rows};
pub(crate) use posterior::convolve;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{ErrorRates, Stratum};

/// Edge-drop probability `p` and false-edge probability `q` of the observed
/// network, optionally split into `within`/`between` strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismeasureParams {
    pub p: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<[ErrorRates; 2]>,
}

impl MismeasureParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        ErrorRates::new(p, q)?;
        Ok(Self {
            p,
            q,
            per_stratum: None,
        })
    }

    pub fn stratified(within: ErrorRates, between: ErrorRates) -> Result<Self> {
        within.validate()?;
        between.validate()?;
        Ok(Self {
            p: within.p,
            q: within.q,
            per_stratum: Some([within, between]),
        })
    }

    pub fn validate(&self) -> Result<()> {
        ErrorRates::new(self.p, self.q)?;
        if let Some([a, b]) = &self.per_stratum {
            a.validate()?;
            b.validate()?;
        }
        Ok(())
    }

    /// Rates that apply to pairs in stratum `s`.
    pub fn rates(&self, s: Stratum) -> ErrorRates {
        match &self.per_stratum {
            Some(r) => r[s as usize],
            None => ErrorRates { p: self.p, q: self.q },
        }
    }
}

/// Full parameter vector: outcome family plus mismeasurement rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: OutcomeFamily,
    pub mismeasure: MismeasureParams,
}
