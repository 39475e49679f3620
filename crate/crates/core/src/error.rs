use std::io;
use std::path::Path;

/// Crate-wide error type. Variants are grouped by the stage that raises
/// them so the CLI can map each failure to a stable machine-readable kind.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The file violates the declared column layout (missing or unknown
    /// columns, malformed CSV structure).
    #[error("schema error: {0}")]
    Schema(String),

    /// A row is structurally fine but the values violate a data invariant.
    #[error("data error: {0}")]
    Data(String),

    /// Roster file problems or players referenced without a roster entry.
    #[error("roster error: {0}")]
    Roster(String),

    /// An outcome code with no entry in the outcome mapping.
    #[error("outcome mapping error: {0}")]
    Mapping(String),

    /// Invalid run or module configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Statistical routine received input it cannot operate on.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Contingency table with fewer than two informative rows or columns.
    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    /// A quantity whose definition does not cover the given input.
    #[error("undefined: {0}")]
    Undefined(String),

    /// A window whose pass list is not a single connected chain.
    #[error("classification error: {0}")]
    Classification(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        Error::Csv { path: path.display().to_string(), source }
    }

    /// Stable identifier used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Data(_) => "data",
            Error::Roster(_) => "roster",
            Error::Mapping(_) => "mapping",
            Error::Config(_) => "config",
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateTable(_) => "degenerate_table",
            Error::Undefined(_) => "undefined",
            Error::Classification(_) => "classification",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
