use std::path::PathBuf;

use phasorflow_core::error::ErrorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: phasorflow_core::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl From<phasorflow_core::Error> for Error {
    fn from(source: phasorflow_core::Error) -> Self {
        Error::Model {
            context: "model".into(),
            source,
        }
    }
}

impl Error {
    pub fn model(context: impl Into<String>, source: phasorflow_core::Error) -> Self {
        Error::Model {
            context: context.into(),
            source,
        }
    }

    /// 1 for bad input, 2 for solver failure, 3 for an infeasible OPF.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Model { source, .. } => match source.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Solver => 2,
                ErrorKind::Infeasible => 3,
            },
            _ => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "solver",
            3 => "infeasible",
            _ => "validation",
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, phasorflow_core::Error> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::model(what(), e))
    }
}
