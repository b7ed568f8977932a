use alloc::string::String;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no subject observed in condition {0}")]
    EmptyCondition(&'static str),
    #[error("zero exposure probability for subject {0}")]
    ZeroProbability(usize),
    #[error("observed count {observed} exceeds sub-population size {population}")]
    CountExceedsPopulation { observed: usize, population: usize },
    #[error("{observed} observed edges out of {population} have zero probability under the prior and error rates")]
    ImpossibleObservation { observed: usize, population: usize },
    #[error("mixture mass underflow for subject {0}")]
    Underflow(usize),
    #[error("all {0} EM starts failed; last error: {1}")]
    AllStartsFailed(usize, String),
    #[error("too many failed bootstrap replicates: {failed} of {total}")]
    BootstrapFailures { failed: usize, total: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
