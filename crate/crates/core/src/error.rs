use thiserror::Error;

use crate::{data::DataError, eval::EvalError, forest::ForestError, graph::GraphError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure raised along the scoring and evaluation pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
