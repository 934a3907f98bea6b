use thiserror::Error;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kaap_core::Error),
    /// A validation suite exceeded its tolerance.
    #[error("tolerance breach: {0}")]
    Breach(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 1 = tolerance breach, 2 = parse/config, 3 = shape, 4 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Breach(_) => 1,
            CliError::Core(kaap_core::Error::Shape { .. }) => 3,
            CliError::Core(kaap_core::Error::Numeric(_)) => 4,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use kaap_core::Error;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Breach("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(Error::Parse("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::RejectedConfiguration("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Numeric("x".into())).exit_code(), 4);
        let shape = Error::Shape {
            context: "x".into(),
            expected: "1".into(),
            actual: "2".into(),
        };
        assert_eq!(CliError::from(shape).exit_code(), 3);
    }
}
