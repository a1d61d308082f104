use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] mlca_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported fit file schema version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },
}

impl CliError {
    /// 0 success, 1 bad input, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_exit_with_two() {
        assert_eq!(CliError::Model(mlca_core::Error::ZeroLikelihood { row: 3 }).exit_code(), 2);
        assert_eq!(CliError::Model(mlca_core::Error::MissingColumn("x".into())).exit_code(), 1);
        assert_eq!(CliError::Usage("bad".into()).exit_code(), 1);
    }
}
