use thiserror::Error;

/// Harness failures, grouped by the exit-code category they map to.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Numerical(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Data(_) => "data",
            HarnessError::Numerical(_) => "numerical",
        }
    }
}

impl From<fstta_core::Error> for HarnessError {
    fn from(e: fstta_core::Error) -> Self {
        use fstta_core::Error as E;
        match e {
            E::NoConvergence { .. } | E::Training(_) => HarnessError::Numerical(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
