use thiserror::Error;

use crate::solver::FactorModel;

/// Which factor a link model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Row,
    Column,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Row => write!(f, "row"),
            Side::Column => write!(f, "column"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible measurements: {0}")]
    Infeasible(String),

    #[error("polytope projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionNotConverged { iterations: usize, residual: f64 },

    #[error("feature matrix is rank deficient: {rows}x{cols} with numerical rank {rank}")]
    RankDeficient { rows: usize, cols: usize, rank: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("spline basis needs at least {needed} distinct feature values, found {found}")]
    TooFewDistinctValues { needed: usize, found: usize },

    #[error("{side} link fit failed for column {column} at iteration {iteration}: {source}")]
    LinkFit {
        side: Side,
        column: usize,
        iteration: usize,
        source: Box<Error>,
    },

    #[error("sampling-error solver diverged at iteration {iteration} (objective {objective:e})")]
    Diverged {
        iteration: usize,
        objective: f64,
        model: Box<FactorModel>,
    },

    #[error("model was fitted without side information and cannot predict new {0}s")]
    NoSideInformation(Side),

    #[error("missing fitted link for {side} column {column}")]
    MissingLink { side: Side, column: usize },

    #[error("permutation search over {columns} columns exceeds the cap of {cap}")]
    SearchTooLarge { columns: usize, cap: usize },

    #[error("reference matrix has zero norm")]
    ZeroReference,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        });
    }
    Ok(())
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}
