use std::path::PathBuf;

use thiserror::Error;

use crate::data::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of the CLI exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate epoch: covariance trace is zero")]
    DegenerateEpoch,

    #[error("degenerate feature: filtered row {row} has zero power")]
    DegenerateFeature { row: usize },

    #[error("no epoch of class {0}")]
    EmptyClass(Label),

    #[error("every epoch of class {0} has zero weight")]
    ZeroWeight(Label),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),

    #[error("source affinity undefined: {0}")]
    Affinity(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid label byte {value} at byte {offset}")]
    Label { offset: u64, value: u8 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("subject {subject}: {source}")]
    Subject {
        subject: String,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy {strategy}: {source}")]
    Strategy {
        strategy: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_subject(self, subject: impl Into<String>) -> Self {
        Error::Subject {
            subject: subject.into(),
            source: Box::new(self),
        }
    }

    pub fn in_strategy(self, strategy: impl std::fmt::Display) -> Self {
        Error::Strategy {
            strategy: strategy.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, with subject/strategy context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Subject { source, .. } | Error::Strategy { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 configuration, 3 data format or I/O, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_)
            | Error::Dimension(_)
            | Error::EmptyClass(_)
            | Error::ZeroWeight(_)
            | Error::InsufficientData(_) => 2,
            Error::Format { .. } | Error::Label { .. } | Error::Io { .. } | Error::Csv { .. } => 3,
            Error::DegenerateEpoch
            | Error::DegenerateFeature { .. }
            | Error::Conditioning(_)
            | Error::Affinity(_) => 4,
            Error::Subject { .. } | Error::Strategy { .. } => unreachable!("root() strips context"),
        }
    }
}
