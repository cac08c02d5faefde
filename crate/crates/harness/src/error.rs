use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] dbgd::Error),

    /// A core error attributed to one grid cell or initialization.
    #[error("{cell}: {source}")]
    Cell { cell: String, source: dbgd::Error },

    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn config(field: &str, msg: impl std::fmt::Display) -> Self {
        HarnessError::Config(format!("{field}: {msg}"))
    }

    pub fn in_cell(cell: &str, source: dbgd::Error) -> Self {
        HarnessError::Cell { cell: cell.to_string(), source }
    }

    /// Prefixes a config error with an outer field path.
    pub fn relocate(self, field: &str) -> Self {
        match self {
            HarnessError::Config(m) => HarnessError::Config(format!("{field}.{m}")),
            other => other,
        }
    }

    fn core(&self) -> Option<&dbgd::Error> {
        match self {
            HarnessError::Core(e) | HarnessError::Cell { source: e, .. } => Some(e),
            _ => None,
        }
    }

    /// 2 for configuration problems, 3 for divergence, 4 for a missing
    /// problem capability, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match (self, self.core()) {
            (HarnessError::Config(_), _) => 2,
            (_, Some(dbgd::Error::Config(_) | dbgd::Error::Precondition(_))) => 2,
            (_, Some(dbgd::Error::Divergence { .. } | dbgd::Error::Evaluation(_))) => 3,
            (_, Some(dbgd::Error::Capability(_))) => 4,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
