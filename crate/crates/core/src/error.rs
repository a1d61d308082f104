use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv format error: {0}")]
    Format(String),

    #[error("column `{0}` not found in input")]
    MissingColumn(String),

    #[error("item `{0}` has a single observed category; its response probabilities are not identified")]
    DegenerateItem(String),

    #[error("covariate `{0}` is constant; its dummy coding is empty")]
    DegenerateCovariate(String),

    #[error("high-level covariate `{column}` varies within group `{group}`")]
    InconsistentGroupCovariate { column: String, group: String },

    #[error("no rows left for structural estimation after removing missing covariates")]
    EmptyStructuralData,

    #[error("no complete rows left after removing missing item responses")]
    EmptyData,

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("cannot form {k} clusters from {n} observations")]
    Infeasible { k: usize, n: usize },

    #[error("zero likelihood at row {row}")]
    ZeroLikelihood { row: usize },

    #[error("log-likelihood decreased from {previous} to {current} at iteration {iteration}")]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown group label `{0}`")]
    UnknownGroup(String),

    #[error("every model in the selection grid failed")]
    AllCellsFailed,
}

impl Error {
    pub(crate) fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ZeroLikelihood { .. }
            | Error::NonMonotone { .. }
            | Error::Convergence(_)
            | Error::AllCellsFailed => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
