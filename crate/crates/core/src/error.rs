use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration, arguments or schema.
    Config,
    /// Input data violates a precondition.
    Data,
    /// A numerical procedure failed (rank deficiency, non-convergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed CSV at row {row}: {message}")]
    MalformedCsv { row: u64, message: String },

    #[error("CSV header is missing column '{0}'")]
    MissingColumn(String),

    #[error("non-numeric token '{token}' in numeric column '{column}' at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        token: String,
    },

    #[error("unknown category label '{label}' in column '{column}' at row {row}")]
    UnknownCategory {
        column: String,
        row: usize,
        label: String,
    },

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("column '{column}' row {row}: value {value} is outside the domain of the {transform} transform")]
    Domain {
        column: String,
        row: usize,
        value: f64,
        transform: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("design matrix is rank deficient: column '{column}' is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MalformedCsv { .. }
            | Error::NonNumeric { .. }
            | Error::UnknownCategory { .. }
            | Error::Domain { .. }
            | Error::InsufficientData(_)
            | Error::Io { .. } => ErrorClass::Data,
            Error::RankDeficient { .. } | Error::NonConvergence(_) => ErrorClass::Numerical,
            Error::MissingColumn(_)
            | Error::UnknownVariable(_)
            | Error::InvalidSchema(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Json(_) => ErrorClass::Config,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
