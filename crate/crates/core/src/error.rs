use std::path::PathBuf;

/// Errors raised by the transcription toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("symbol table mismatch: {0}")]
    SymbolTableMismatch(String),

    #[error("machine has no accepting path")]
    NoPath,

    #[error("empty lattice: {0}")]
    EmptyLattice(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown symbol(s): {}", .0.join(", "))]
    UnknownSymbols(Vec<String>),

    #[error("infeasible training pairs (more than {max_chunk} letters per phone): {details}")]
    Infeasible { max_chunk: usize, details: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::SymbolTableMismatch(_) => "symbol-table-mismatch",
            Error::NoPath => "no-path",
            Error::EmptyLattice(_) => "empty-lattice",
            Error::Parse { .. } => "parse",
            Error::UnknownSymbols(_) => "unknown-symbols",
            Error::Infeasible { .. } => "infeasible",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit status: 4 for numeric failures, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
