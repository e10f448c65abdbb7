use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("unknown built-in instance `{0}` (expected example2, example4 or example2-ct)")]
    UnknownInstance(String),

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("malformed field `{field}`: {message}")]
    Malformed { field: String, message: String },

    #[error("json error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear program is infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("linear program is unbounded (entering column {column})")]
    Unbounded { column: usize },

    #[error("simplex iteration limit {0} reached")]
    SimplexLimit(usize),

    #[error("relative value iteration did not converge within {iterations} iterations (span {span:e})")]
    NotConverged { iterations: usize, span: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("{what}·N = {value} is not an integer for N = {n}")]
    Divisibility { what: String, value: f64, n: usize },

    #[error("unknown policy selector `{0}`")]
    UnknownPolicy(String),

    #[error("policy `{policy}` is not available for {kind} instances")]
    UnsupportedPolicy { policy: String, kind: &'static str },

    #[error("enumeration bound exceeded: {n_states} states (limit {limit})")]
    TooManyStates { n_states: usize, limit: usize },

    #[error(
        "synchronization assumption fails: diagonal unreachable from (s={s}, a={a}, s_hat={s_hat}, a_hat={a_hat})"
    )]
    SyncUnreachable {
        s: usize,
        a: usize,
        s_hat: usize,
        a_hat: usize,
    },

    #[error("missing synchronization report for type {0}")]
    MissingSyncReport(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("refusing to overwrite {}: existing content differs", .0.display())]
    Conflict(std::path::PathBuf),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
