use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph has {0} nodes; at most {max} are supported", max = crate::dag::MAX_NODES)]
    TooManyNodes(usize),
    #[error("node index {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge {0} -> {1} already present")]
    EdgeExists(usize, usize),
    #[error("edge {0} -> {1} not present")]
    MissingEdge(usize, usize),
    #[error("inserting {0} -> {1} would create a directed cycle")]
    Cycle(usize, usize),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("{what} is limited to n <= {max}, got {n}")]
    TooLarge { what: &'static str, n: usize, max: usize },
    #[error("{0} path variables in one part exceeds the enumeration limit of {max}", max = crate::path::MAX_PART_VARIABLES)]
    TooManyVariables(usize),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("configuration is invalid or has zero probability")]
    InvalidConfiguration,
    #[error("distributions have mismatched support: {0}")]
    SupportMismatch(String),
    #[error("target P(r{var} = {value:?}) > 0 but the reference distribution gives it no support")]
    ZeroSupport { var: usize, value: crate::path::PathValue },
    #[error("path variable {0}: {1}")]
    Belief(usize, String),
    #[error("data error: {0}")]
    Arity(String),
    #[error("part {part}: {source}")]
    Part {
        part: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("coherence target not reached after {0} attempts")]
    CoherenceUnreachable(usize),
    #[error("fit did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
