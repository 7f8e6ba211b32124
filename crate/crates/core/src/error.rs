use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unmapped value {value:?} in column `{column}` at row {row}")]
    Mapping {
        row: usize,
        column: String,
        value: String,
    },

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("insufficient comparators for record {record}: {plus} on the positive side, {minus} on the negative side (need {k_min})")]
    InsufficientComparators {
        record: u64,
        plus: usize,
        minus: usize,
        k_min: usize,
    },

    #[error("singular design: column(s) {columns:?} are linearly dependent on earlier columns")]
    SingularDesign { columns: Vec<String> },

    #[error("empty subgroup: {0}")]
    EmptySubgroup(String),

    #[error("non-monotone outcome model: average slope {slope} is not positive")]
    NonMonotone { slope: f64 },

    #[error("treatment level {level} is missing or too rare ({count} records)")]
    MissingLevel { level: u32, count: usize },

    #[error("no records at treatment level {level} to estimate from")]
    EmptyCell { level: u32 },

    #[error("causal graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("unknown node `{0}` in causal graph")]
    UnknownNode(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("query not identifiable: `{0}` is a descendant of the treatment")]
    Identifiability(String),

    #[error("conditioning event has zero probability")]
    ZeroProbability,

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
