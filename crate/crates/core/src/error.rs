use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error families; the CLI maps each to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Schema,
    InvalidInput,
    Processing,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {record}: invalid field `{field}`: {message}")]
    MalformedRecord {
        record: String,
        field: String,
        message: String,
    },

    #[error("duplicate report_id `{0}`")]
    DuplicateReportId(String),

    #[error("schema: duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("schema: column `{column}` has unknown kind `{kind}`")]
    UnknownKind { column: String, kind: String },

    #[error("schema: required AF flag column `{0}` is missing")]
    MissingAfFlag(String),

    #[error("unknown feature column `{0}`")]
    UnknownColumn(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid rule `{pattern}`: {message}")]
    InvalidRule { pattern: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("patient {0}: no vector qualifies as AF onset")]
    NoOnset(String),

    #[error("column `{0}` has no observed values in the training split")]
    AllMissingColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("row width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("fold {fold} is missing a class; use fewer folds")]
    FoldMissingClass { fold: usize },

    #[error("metric is undefined: {0}")]
    Undefined(String),

    #[error("external predictor failed: {0}")]
    External(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(
        record: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::MalformedRecord {
            record: record.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::DuplicateColumn(_)
            | Error::UnknownKind { .. }
            | Error::MissingAfFlag(_)
            | Error::UnknownColumn(_)
            | Error::SchemaMismatch(_)
            | Error::WidthMismatch { .. } => ErrorKind::Schema,
            Error::MalformedRecord { .. }
            | Error::DuplicateReportId(_)
            | Error::InvalidRule { .. }
            | Error::Config(_)
            | Error::InvalidArgument(_) => ErrorKind::InvalidInput,
            Error::NoOnset(_)
            | Error::AllMissingColumn(_)
            | Error::NonFiniteLoss { .. }
            | Error::FoldMissingClass { .. }
            | Error::Undefined(_)
            | Error::External(_) => ErrorKind::Processing,
        }
    }
}
