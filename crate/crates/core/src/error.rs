use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by data loading, encoding and model fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid formula: {0}")]
    Formula(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design is rank deficient: column `{column}` is linearly dependent on the preceding columns")]
    RankDeficient { column: String },

    #[error("too many columns for exhaustive search ({p} > {max}); use stepwise selection or the lasso path")]
    TooManyColumns { p: usize, max: usize },

    #[error("model is not a linear smoother: {0}")]
    NotLinearSmoother(&'static str),

    #[error("empty neighborhood: every kernel weight is zero at the query point")]
    EmptyNeighborhood,

    #[error("non-finite parameters after {0} updates; lower the learning rate")]
    NonFinite(usize),

    #[error("only one class present in the response")]
    SingleClass,

    #[error("fold {fold} contains a single class in its training or test part; use stratified folds")]
    FoldMissingClass { fold: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
