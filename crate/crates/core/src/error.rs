use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected `head<TAB>relation<TAB>tail`, found {found} field(s)")]
    Parse {
        path: PathBuf,
        line: usize,
        found: usize,
    },

    #[error("unknown {kind} token `{token}` (vocabulary is fixed)")]
    Vocabulary { kind: &'static str, token: String },

    #[error("graph construction: {0}")]
    Graph(String),

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("closure is not deterministic: two evaluations gave {first} and {second}")]
    Determinism { first: f64, second: f64 },

    #[error("dense attention refused for {entities} entities (limit {limit})")]
    OracleScope { entities: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot sample {requested} negatives from {available} candidates")]
    Sampling { requested: usize, available: usize },

    #[error("metrics over an empty ranking list")]
    EmptyMetrics,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
