use std::path::PathBuf;

use crate::graph::HetGraph;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("training diverged at step {step}: {msg}")]
    Training { step: usize, msg: String },

    /// The assembler gave up before reaching the requested edge count. The
    /// graph built so far is carried along so callers can still use it.
    #[error("assembly stalled at {reached} of {target} edges")]
    Stall {
        reached: usize,
        target: usize,
        partial: Box<HetGraph>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
