use std::path::PathBuf;

/// Errors produced anywhere in the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("line search failed at iteration {iteration} (merit {merit:.3e})")]
    LineSearch { iteration: usize, merit: f64 },
    #[error("rank-deficient constraint jacobian, dependent rows {rows:?}")]
    RankDeficient { rows: Vec<usize> },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("numerical rank {rank} is below the requested basis size {requested}")]
    RankTooLow { rank: usize, requested: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("inconsistent artifact: {0}")]
    Consistency(String),
    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<PathBuf>),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
