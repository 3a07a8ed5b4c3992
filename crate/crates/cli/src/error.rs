use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Wraps a library error, prefixing `context`.
    pub fn from_core(context: &str, err: l0robust::Error) -> Self {
        use l0robust::Error as E;
        let msg = format!("{context}: {err}");
        match err {
            E::InvalidInput(_) | E::TooLarge { .. } | E::WindowTooLarge { .. } | E::TooFewInliers { .. } => CliError::Usage(msg),
            E::Dimension(_) | E::TooFewRows { .. } => CliError::Data(msg),
            E::RankDeficient | E::NotConverged { .. } | E::DegenerateFit | E::DivisionDomain { .. } | E::AllFitsFailed => {
                CliError::Numerical(msg)
            }
        }
    }
}
