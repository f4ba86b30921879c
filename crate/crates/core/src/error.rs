use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("route is not a walk on the map: {0}")]
    BrokenRoute(String),

    #[error("planner invariant violated: {0}")]
    Planner(String),

    #[error("audit mismatch: {0}")]
    Audit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
