use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: duplicate row for entity `{entity}` in {quarter} (rows {first_row} and {second_row})")]
    DuplicateRow {
        path: String,
        entity: String,
        quarter: String,
        first_row: usize,
        second_row: usize,
    },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseCell {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("bad quarter label `{0}` (expected YYYYQn)")]
    BadQuarter(String),

    #[error("entity `{0}` has no outgoing weight (isolated node)")]
    IsolatedNode(String),

    #[error("spatial parameter rho = {rho} outside admissible interval ({lower}, {upper})")]
    RhoOutOfInterval { rho: f64, lower: f64, upper: f64 },

    #[error("singular regressor cross-product; collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("{what} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty result: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
