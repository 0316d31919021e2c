use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the data, prior, sampler and summary layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("negative count at row {row} ({spot}), column {col} ({gene})")]
    NegativeCount {
        row: usize,
        col: usize,
        spot: String,
        gene: String,
    },

    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate after QC: {spots} spots, {genes} genes remain")]
    DegenerateAfterQc { spots: usize, genes: usize },

    #[error("spot {spot} has zero total count; run quality control first")]
    ZeroRowSum { spot: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("V_n table covers t <= {t_max}, but t = {requested} was requested; extend the table")]
    VnTableTooShort { t_max: usize, requested: usize },

    #[error("labels are not contiguous: {0}")]
    NonContiguousLabels(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("empty trace: no samples were recorded")]
    EmptyTrace,

    #[error("missing point estimate: {0}")]
    MissingEstimate(String),

    #[error("no discriminating genes selected; domain distance is undefined")]
    NoDiscriminatingGenes,

    #[error("all {0} grid points failed")]
    AllFitsFailed(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
