use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A binary file could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A text file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// Mathematically undefined result (e.g. kappa with chance agreement of 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the file a nested error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable category used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Contract(_) => "contract",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::Io { .. } => "io",
            Error::InFile { source, .. } => source.kind(),
        }
    }
}
